//! Typed data model for extraction schemas and annotations.
//!
//! A [`TaskSchema`] is an ordered list of [`LabelDef`]s. Each label is rendered
//! as a class in the prompt: its guideline becomes the docstring, its fields
//! become typed attributes, and its candidate pool becomes a comment under the
//! span field. Gold and predicted instances are [`Annotation`]s whose values
//! are plain strings or string lists.
//!
//! Schemas are read from TOML files:
//!
//! ```toml
//! dataset_id = "conll03"
//! kind = "NER"
//!
//! [[labels]]
//! name = "Person"
//! parent = "Entity"
//! guideline = "Names of people."
//! paraphrases = ["Proper names that refer to a person."]
//! candidates = ["Obama", "Marie Curie"]
//! fields = [{ name = "span", type = "span", comment = "The person's name" }]
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
    #[serde(rename = "EE")]
    Ee,
    #[serde(rename = "EAE")]
    Eae,
    #[serde(rename = "SF")]
    Sf,
    Custom,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Ner,
        TaskKind::Re,
        TaskKind::Ee,
        TaskKind::Eae,
        TaskKind::Sf,
        TaskKind::Custom,
    ];

    pub const fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Ner => "NER",
            TaskKind::Re => "RE",
            TaskKind::Ee => "EE",
            TaskKind::Eae => "EAE",
            TaskKind::Sf => "SF",
            TaskKind::Custom => "Custom",
        }
    }

    /// Event tasks are the only ones where category-only matching is meaningful.
    pub const fn is_event(&self) -> bool {
        matches!(self, TaskKind::Ee | TaskKind::Eae)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    /// The extraction anchor. Exactly one per label.
    Span,
    Text,
    TextList,
    OptionalText,
    OptionalTextList,
}

impl FieldType {
    pub const fn is_optional(&self) -> bool {
        matches!(self, FieldType::OptionalText | FieldType::OptionalTextList)
    }

    pub const fn is_list(&self) -> bool {
        matches!(self, FieldType::TextList | FieldType::OptionalTextList)
    }

    /// Python type annotation used in the rendered class body.
    pub const fn type_expr(&self) -> &'static str {
        match self {
            FieldType::Span | FieldType::Text => "str",
            FieldType::TextList => "List[str]",
            FieldType::OptionalText => "Optional[str]",
            FieldType::OptionalTextList => "Optional[List[str]]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ftype: FieldType,
    #[serde(default)]
    pub comment: String,
}

impl FieldDef {
    pub fn new(name: impl Into<String>, ftype: FieldType, comment: impl Into<String>) -> Self {
        FieldDef {
            name: name.into(),
            ftype,
            comment: comment.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parent {
    Entity,
    Relation,
    Event,
    Template,
}

impl Parent {
    pub const fn as_str(&self) -> &'static str {
        match self {
            Parent::Entity => "Entity",
            Parent::Relation => "Relation",
            Parent::Event => "Event",
            Parent::Template => "Template",
        }
    }
}

impl fmt::Display for Parent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDef {
    pub name: String,
    pub parent: Parent,
    #[serde(default)]
    pub guideline: String,
    #[serde(default)]
    pub paraphrases: Vec<String>,
    #[serde(default)]
    pub candidates: Vec<String>,
    pub fields: Vec<FieldDef>,
}

impl LabelDef {
    /// An `Entity` label with a single `span` field.
    pub fn entity(name: impl Into<String>, guideline: impl Into<String>) -> Self {
        LabelDef {
            name: name.into(),
            parent: Parent::Entity,
            guideline: guideline.into(),
            paraphrases: Vec::new(),
            candidates: Vec::new(),
            fields: vec![FieldDef::new("span", FieldType::Span, "")],
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn span_field(&self) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.ftype == FieldType::Span)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchema {
    pub dataset_id: String,
    pub kind: TaskKind,
    pub labels: Vec<LabelDef>,
}

impl TaskSchema {
    pub fn label(&self, name: &str) -> Option<&LabelDef> {
        self.labels.iter().find(|l| l.name == name)
    }

    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.name.as_str())
    }

    pub fn from_toml_str(src: &str) -> Result<Self, SchemaFileError> {
        toml::from_str(src).map_err(|e| {
            let line = e.span().map(|span| line_of(src, span.start));
            SchemaFileError::Syntax {
                path: None,
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, SchemaFileError> {
        let src = std::fs::read_to_string(path).map_err(|source| SchemaFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&src).map_err(|e| e.with_path(path))
    }
}

fn line_of(src: &str, byte: usize) -> usize {
    src[..byte.min(src.len())].matches('\n').count() + 1
}

#[derive(Debug, Error)]
pub enum SchemaFileError {
    #[error("{}:{}: {message}", path_display(path), line.map_or("?".to_string(), |l| l.to_string()))]
    Syntax {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl SchemaFileError {
    fn with_path(self, p: &Path) -> Self {
        match self {
            SchemaFileError::Syntax { line, message, .. } => SchemaFileError::Syntax {
                path: Some(p.to_path_buf()),
                line,
                message,
            },
            other => other,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            SchemaFileError::Syntax { line, .. } => *line,
            SchemaFileError::Io { .. } => None,
        }
    }
}

fn path_display(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or_else(|| "<schema>".to_string(), |p| p.display().to_string())
}

/// A field value. `Absent` serializes as JSON `null`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Text(String),
    TextList(Vec<String>),
    Absent,
}

impl FieldValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Every string carried by the value, in order.
    pub fn texts(&self) -> Vec<&str> {
        match self {
            FieldValue::Text(s) => vec![s.as_str()],
            FieldValue::TextList(v) => v.iter().map(String::as_str).collect(),
            FieldValue::Absent => Vec::new(),
        }
    }

    fn conforms_to(&self, ftype: FieldType) -> bool {
        match self {
            FieldValue::Text(_) => !ftype.is_list(),
            FieldValue::TextList(_) => ftype.is_list(),
            FieldValue::Absent => ftype.is_optional(),
        }
    }
}

impl From<&str> for FieldValue {
    fn from(s: &str) -> Self {
        FieldValue::Text(s.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(s: String) -> Self {
        FieldValue::Text(s)
    }
}

impl From<Vec<String>> for FieldValue {
    fn from(v: Vec<String>) -> Self {
        FieldValue::TextList(v)
    }
}

impl From<Vec<&str>> for FieldValue {
    fn from(v: Vec<&str>) -> Self {
        FieldValue::TextList(v.into_iter().map(str::to_string).collect())
    }
}

/// One extracted instance.
///
/// Equality treats a missing key and an explicit [`FieldValue::Absent`] as the
/// same thing, since both render identically.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    #[serde(default)]
    pub values: BTreeMap<String, FieldValue>,
}

impl PartialEq for Annotation {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.present_values().eq(other.present_values())
    }
}

impl Annotation {
    pub fn new(label: impl Into<String>) -> Self {
        Annotation {
            label: label.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: impl Into<String>, value: impl Into<FieldValue>) -> Self {
        self.values.insert(field.into(), value.into());
        self
    }

    pub fn get(&self, field: &str) -> Option<&FieldValue> {
        self.values.get(field)
    }

    fn present_values(&self) -> impl Iterator<Item = (&String, &FieldValue)> {
        self.values
            .iter()
            .filter(|(_, v)| !matches!(v, FieldValue::Absent))
    }

    /// The value of the label's span field, resolved through the schema.
    pub fn span<'a>(&'a self, schema: &TaskSchema) -> Option<&'a str> {
        let field = schema.label(&self.label)?.span_field()?;
        self.values.get(&field.name)?.as_text()
    }

    /// Span value when the schema is unknown: the `span` or `mention` key, else
    /// the first plain-text value.
    pub fn span_guess(&self) -> Option<&str> {
        ["span", "mention"]
            .iter()
            .find_map(|k| self.values.get(*k).and_then(FieldValue::as_text))
            .or_else(|| self.values.values().find_map(FieldValue::as_text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, alias = "annotations")]
    pub gold: Vec<Annotation>,
}

impl Document {
    /// Gold annotations whose span value is not a substring of the text.
    pub fn span_violations(&self, schema: &TaskSchema) -> Vec<Violation> {
        self.gold
            .iter()
            .filter_map(|a| {
                let span = a.span(schema)?;
                (!self.text.contains(span)).then(|| Violation::SpanNotInText {
                    label: a.label.clone(),
                    span: span.to_string(),
                })
            })
            .collect()
    }
}

/// Byte range of the first occurrence of `span` in `text`.
pub fn find_span(text: &str, span: &str) -> Option<(usize, usize)> {
    text.find(span).map(|start| (start, start + span.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptySchema,
    DuplicateLabel { label: String },
    BadLabelName { label: String },
    BadFieldName { label: String, field: String },
    DuplicateField { label: String, field: String },
    SpanFieldCount { label: String, count: usize },
    EntityShape { label: String },
    DuplicateCandidate { label: String, candidate: String },
    UnknownLabel { label: String },
    MissingField { label: String, field: String },
    AbsentRequired { label: String, field: String },
    ExtraneousField { label: String, field: String },
    TypeMismatch { label: String, field: String, expected: FieldType },
    SpanNotInText { label: String, span: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySchema => write!(f, "schema defines no labels"),
            Violation::DuplicateLabel { label } => write!(f, "{label}: duplicate label name"),
            Violation::BadLabelName { label } => {
                write!(f, "{label}: label name must match [A-Z][A-Za-z0-9]*")
            }
            Violation::BadFieldName { label, field } => {
                write!(f, "{label}.{field}: field name must match [a-z_][a-z0-9_]*")
            }
            Violation::DuplicateField { label, field } => {
                write!(f, "{label}.{field}: duplicate field name")
            }
            Violation::SpanFieldCount { label, count } => {
                write!(f, "{label}: expected exactly one span field, found {count}")
            }
            Violation::EntityShape { label } => {
                write!(f, "{label}: Entity labels take exactly one span field")
            }
            Violation::DuplicateCandidate { label, candidate } => {
                write!(f, "{label}: duplicate candidate {candidate:?}")
            }
            Violation::UnknownLabel { label } => write!(f, "{label}: label not in schema"),
            Violation::MissingField { label, field } => {
                write!(f, "{label}.{field}: missing required field")
            }
            Violation::AbsentRequired { label, field } => {
                write!(f, "{label}.{field}: required field is absent")
            }
            Violation::ExtraneousField { label, field } => {
                write!(f, "{label}.{field}: field not defined by the label")
            }
            Violation::TypeMismatch {
                label,
                field,
                expected,
            } => write!(f, "{label}.{field}: value does not fit {}", expected.type_expr()),
            Violation::SpanNotInText { label, span } => {
                write!(f, "{label}: span {span:?} does not occur in the text")
            }
        }
    }
}

pub fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric())
}

pub fn is_field_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn validate_schema(schema: &TaskSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    if schema.labels.is_empty() {
        out.push(Violation::EmptySchema);
    }
    let mut seen_labels = HashSet::new();
    for label in &schema.labels {
        let name = &label.name;
        if !seen_labels.insert(name.as_str()) {
            out.push(Violation::DuplicateLabel {
                label: name.clone(),
            });
        }
        if !is_label_name(name) {
            out.push(Violation::BadLabelName {
                label: name.clone(),
            });
        }
        let mut seen_fields = HashSet::new();
        for field in &label.fields {
            if !is_field_name(&field.name) {
                out.push(Violation::BadFieldName {
                    label: name.clone(),
                    field: field.name.clone(),
                });
            }
            if !seen_fields.insert(field.name.as_str()) {
                out.push(Violation::DuplicateField {
                    label: name.clone(),
                    field: field.name.clone(),
                });
            }
        }
        let spans = label
            .fields
            .iter()
            .filter(|f| f.ftype == FieldType::Span)
            .count();
        if spans != 1 {
            out.push(Violation::SpanFieldCount {
                label: name.clone(),
                count: spans,
            });
        } else if label.parent == Parent::Entity && label.fields.len() != 1 {
            out.push(Violation::EntityShape {
                label: name.clone(),
            });
        }
        let mut seen_candidates = HashSet::new();
        for c in &label.candidates {
            if !seen_candidates.insert(c.as_str()) {
                out.push(Violation::DuplicateCandidate {
                    label: name.clone(),
                    candidate: c.clone(),
                });
            }
        }
    }
    out
}

pub fn validate_annotation(ann: &Annotation, schema: &TaskSchema) -> Vec<Violation> {
    let Some(def) = schema.label(&ann.label) else {
        return vec![Violation::UnknownLabel {
            label: ann.label.clone(),
        }];
    };
    let mut out = Vec::new();
    for field in &def.fields {
        match ann.values.get(&field.name) {
            None if !field.ftype.is_optional() => out.push(Violation::MissingField {
                label: def.name.clone(),
                field: field.name.clone(),
            }),
            Some(FieldValue::Absent) if !field.ftype.is_optional() => {
                out.push(Violation::AbsentRequired {
                    label: def.name.clone(),
                    field: field.name.clone(),
                })
            }
            Some(v) if !v.conforms_to(field.ftype) => out.push(Violation::TypeMismatch {
                label: def.name.clone(),
                field: field.name.clone(),
                expected: field.ftype,
            }),
            _ => {}
        }
    }
    for key in ann.values.keys() {
        if def.field(key).is_none() {
            out.push(Violation::ExtraneousField {
                label: def.name.clone(),
                field: key.clone(),
            });
        }
    }
    out
}
