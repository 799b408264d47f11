//! Renders a schema and a document into the code-style prompt.
//!
//! The output is a fixed Python subset, byte-for-byte deterministic:
//!
//! ```text
//! class Person(Entity):
//!     """Names of people."""
//!     span: str  # The name
//!     # Examples: "Obama", "Marie Curie"
//!
//! text = "Obama spoke."
//!
//! result = [
//!     Person(span="Obama"),
//! ]
//! ```
//!
//! Four-space indentation, LF line endings, no trailing newline. Classes are
//! separated by one blank line; docstrings are greedily word-wrapped at
//! `wrap_column` with the opening and closing quotes counted as part of the
//! first and last word. String literals are double-quoted and escape exactly
//! `\\`, `\"`, `\n` and `\t`; any other control character is rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regularize::RegularizationTrace;
use crate::schema::{validate_annotation, Annotation, Document, FieldType, FieldValue, LabelDef, TaskSchema, Violation};

/// Literal that starts the result block.
pub const RESULT_OPENER: &str = "result = [";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub include_guidelines: bool,
    pub include_candidates: bool,
    pub candidates_k: usize,
    pub wrap_column: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            include_guidelines: true,
            include_candidates: true,
            candidates_k: 5,
            wrap_column: 80,
        }
    }
}

impl RenderOptions {
    /// Class bodies without docstrings, comments or candidates.
    pub fn baseline() -> Self {
        RenderOptions {
            include_guidelines: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("wrap_column must be at least 40, got {0}")]
    WrapTooNarrow(usize),
    #[error("invalid annotation: {}", join(.0))]
    InvalidAnnotation(Vec<Violation>),
    #[error("{what} contains an unrenderable character U+{code:04X}")]
    UnrenderableValue { what: String, code: u32 },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A rendered training/inference example.
///
/// `prompt` is the full text; `result` is its tail starting at `split_offset`
/// (counted in Unicode scalar values), which always begins with `result = [`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledExample {
    pub doc_id: String,
    pub prompt: String,
    pub result: String,
    pub split_offset: usize,
    pub trace: RegularizationTrace,
}

impl CompiledExample {
    /// Byte index equivalent of `split_offset`.
    pub fn split_byte_offset(&self) -> usize {
        self.prompt
            .char_indices()
            .nth(self.split_offset)
            .map_or(self.prompt.len(), |(b, _)| b)
    }

    /// The prompt up to and including `result = [`, the part a model continues.
    pub fn generation_prefix(&self) -> &str {
        &self.prompt[..self.split_byte_offset() + RESULT_OPENER.len()]
    }

    /// Gold block with its `result = ` lead removed, i.e. the bare list.
    pub fn gold_list(&self) -> &str {
        &self.result["result = ".len()..]
    }
}

/// Escapes `s` as a double-quoted literal.
pub fn quote(s: &str, what: &str) -> Result<String, RenderError> {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                return Err(RenderError::UnrenderableValue {
                    what: what.to_string(),
                    code: c as u32,
                })
            }
            c => out.push(c),
        }
    }
    out.push('"');
    Ok(out)
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn wrap_docstring(guideline: &str, wrap_column: usize) -> Vec<String> {
    let mut words: Vec<String> = guideline
        .split_whitespace()
        .map(|w| w.replace('\\', "\\\\").replace('"', "\\\""))
        .collect();
    if words.is_empty() {
        return Vec::new();
    }
    words[0].insert_str(0, "\"\"\"");
    words.last_mut().unwrap().push_str("\"\"\"");

    let mut lines = Vec::new();
    let mut line = String::from("    ");
    let mut width = 4;
    for w in words {
        let wl = w.chars().count();
        if width > 4 && width + 1 + wl > wrap_column {
            lines.push(std::mem::replace(&mut line, String::from("    ")));
            width = 4;
        }
        if width > 4 {
            line.push(' ');
            width += 1;
        }
        line.push_str(&w);
        width += wl;
    }
    lines.push(line);
    lines
}

fn render_class(label: &LabelDef, opts: &RenderOptions, out: &mut String) -> Result<(), RenderError> {
    out.push_str(&format!("class {}({}):\n", label.name, label.parent));
    if opts.include_guidelines {
        for line in wrap_docstring(&label.guideline, opts.wrap_column) {
            out.push_str(&line);
            out.push('\n');
        }
    }
    for field in &label.fields {
        out.push_str(&format!("    {}: {}", field.name, field.ftype.type_expr()));
        let comment = collapse_ws(&field.comment);
        if opts.include_guidelines && !comment.is_empty() {
            out.push_str("  # ");
            out.push_str(&comment);
        }
        out.push('\n');
        if field.ftype == FieldType::Span
            && opts.include_guidelines
            && opts.include_candidates
            && opts.candidates_k > 0
            && !label.candidates.is_empty()
        {
            let what = format!("{} candidate", label.name);
            let cands = label
                .candidates
                .iter()
                .take(opts.candidates_k)
                .map(|c| quote(c, &what))
                .collect::<Result<Vec<_>, _>>()?;
            out.push_str("    # Examples: ");
            out.push_str(&cands.join(", "));
            out.push('\n');
        }
    }
    Ok(())
}

/// The class-definition segment, without a trailing newline.
pub fn render_schema(schema: &TaskSchema, opts: &RenderOptions) -> Result<String, RenderError> {
    if opts.wrap_column < 40 {
        return Err(RenderError::WrapTooNarrow(opts.wrap_column));
    }
    let mut out = String::new();
    for (i, label) in schema.labels.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_class(label, opts, &mut out)?;
    }
    out.pop();
    Ok(out)
}

fn render_value(v: &FieldValue, what: &str) -> Result<String, RenderError> {
    match v {
        FieldValue::Text(s) => quote(s, what),
        FieldValue::TextList(items) => {
            let parts = items
                .iter()
                .map(|s| quote(s, what))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(format!("[{}]", parts.join(", ")))
        }
        FieldValue::Absent => Ok("None".to_string()),
    }
}

/// One constructor call, fields in declaration order, absent values omitted.
pub fn render_call(ann: &Annotation, schema: &TaskSchema) -> Result<String, RenderError> {
    let violations = validate_annotation(ann, schema);
    if !violations.is_empty() {
        return Err(RenderError::InvalidAnnotation(violations));
    }
    let def = schema.label(&ann.label).expect("validated");
    let mut args = Vec::with_capacity(def.fields.len());
    for field in &def.fields {
        match ann.values.get(&field.name) {
            None | Some(FieldValue::Absent) => {}
            Some(v) => {
                let what = format!("{}.{}", def.name, field.name);
                args.push(format!("{}={}", field.name, render_value(v, &what)?));
            }
        }
    }
    Ok(format!("{}({})", def.name, args.join(", ")))
}

pub fn render_result_block(annotations: &[Annotation], schema: &TaskSchema) -> Result<String, RenderError> {
    if annotations.is_empty() {
        return Ok("result = []".to_string());
    }
    let mut out = String::from("result = [\n");
    for ann in annotations {
        out.push_str("    ");
        out.push_str(&render_call(ann, schema)?);
        out.push_str(",\n");
    }
    out.push(']');
    Ok(out)
}

/// Renders `doc` against `schema`. Both are expected to be the post-transform
/// versions described by `trace`; the trace is only carried along.
pub fn render_prompt(
    schema: &TaskSchema,
    doc: &Document,
    opts: &RenderOptions,
    trace: &RegularizationTrace,
) -> Result<CompiledExample, RenderError> {
    let mut prompt = render_schema(schema, opts)?;
    prompt.push_str("\n\ntext = ");
    prompt.push_str(&quote(&doc.text, "document text")?);
    prompt.push_str("\n\n");
    let split_offset = prompt.chars().count();
    let result = render_result_block(&doc.gold, schema)?;
    prompt.push_str(&result);
    Ok(CompiledExample {
        doc_id: doc.doc_id.clone(),
        prompt,
        result,
        split_offset,
        trace: trace.clone(),
    })
}
