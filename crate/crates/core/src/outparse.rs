//! Parser for model-generated result blocks.
//!
//! Accepted grammar (whitespace is insignificant outside strings):
//!
//! ```text
//! output := "[" (call ("," call)* ","?)? "]"
//! call   := IDENT "(" (kwarg ("," kwarg)* ","?)? ")"
//! kwarg  := IDENT "=" value
//! value  := STRING | NUMBER | list | "None" | call
//! list   := "[" (value ("," value)* ","?)? "]"
//! ```
//!
//! Strings may be single- or double-quoted. Up to `max_prefix` characters
//! before the first `[` are skipped (so an echoed `result = ` is fine) and
//! anything after the closing `]` is ignored. Any syntax error yields
//! [`ParseStatus::Unparseable`] with no annotations.
//!
//! Surviving calls are then filtered against the schema: unknown labels are
//! hallucinations, unknown keyword names are dropped field by field, and a call
//! with a nested call, a nested list, or a value that fails validation is
//! dropped whole.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::schema::{validate_annotation, Annotation, FieldValue, TaskSchema};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    /// Longest prefix skipped while looking for the opening `[`.
    pub max_prefix: usize,
    /// Bracket/call nesting limit; deeper input is unparseable.
    pub max_depth: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_prefix: 64,
            max_depth: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub annotations: Vec<Annotation>,
    pub hallucinations: usize,
    pub hallucinated_labels: Vec<String>,
    pub filtered_fields: usize,
    pub validation_drops: usize,
    pub raw: String,
}

impl ParseOutcome {
    fn unparseable(raw: &str) -> Self {
        ParseOutcome {
            status: ParseStatus::Unparseable,
            annotations: Vec::new(),
            hallucinations: 0,
            hallucinated_labels: Vec::new(),
            filtered_fields: 0,
            validation_drops: 0,
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    Num(String),
    List(Vec<Value>),
    Call(Call),
    None,
}

#[derive(Debug, Clone, PartialEq)]
struct Call {
    name: String,
    kwargs: Vec<(String, Value)>,
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
    depth: usize,
    max_depth: usize,
}

type PResult<T> = Result<T, ()>;

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        self.eat(c).then_some(()).ok_or(())
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > self.max_depth {
            Err(())
        } else {
            Ok(())
        }
    }

    fn ident(&mut self) -> PResult<String> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.pos += 1,
            _ => return Err(()),
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    /// `[` call, ... `]`
    fn output(&mut self) -> PResult<Vec<Call>> {
        self.expect('[')?;
        self.enter()?;
        let mut calls = Vec::new();
        self.skip_ws();
        if self.eat(']') {
            return Ok(calls);
        }
        loop {
            calls.push(self.call()?);
            self.skip_ws();
            if self.eat(']') {
                break;
            }
            self.expect(',')?;
            self.skip_ws();
            if self.eat(']') {
                break;
            }
        }
        self.depth -= 1;
        Ok(calls)
    }

    fn call(&mut self) -> PResult<Call> {
        let name = self.ident()?;
        self.skip_ws();
        self.call_args(name)
    }

    fn call_args(&mut self, name: String) -> PResult<Call> {
        self.expect('(')?;
        self.enter()?;
        let mut kwargs = Vec::new();
        self.skip_ws();
        if !self.eat(')') {
            loop {
                let key = self.ident()?;
                self.skip_ws();
                self.expect('=')?;
                self.skip_ws();
                kwargs.push((key, self.value()?));
                self.skip_ws();
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
                self.skip_ws();
                if self.eat(')') {
                    break;
                }
            }
        }
        self.depth -= 1;
        Ok(Call { name, kwargs })
    }

    fn value(&mut self) -> PResult<Value> {
        match self.peek().ok_or(())? {
            q @ ('"' | '\'') => self.string(q).map(Value::Str),
            '[' => self.list(),
            c if c.is_ascii_digit() || c == '-' => self.number().map(Value::Num),
            _ => {
                let id = self.ident()?;
                let save = self.pos;
                self.skip_ws();
                if self.peek() == Some('(') {
                    self.call_args(id).map(Value::Call)
                } else if id == "None" {
                    self.pos = save;
                    Ok(Value::None)
                } else {
                    Err(())
                }
            }
        }
    }

    fn list(&mut self) -> PResult<Value> {
        self.expect('[')?;
        self.enter()?;
        let mut items = Vec::new();
        self.skip_ws();
        if !self.eat(']') {
            loop {
                items.push(self.value()?);
                self.skip_ws();
                if self.eat(']') {
                    break;
                }
                self.expect(',')?;
                self.skip_ws();
                if self.eat(']') {
                    break;
                }
            }
        }
        self.depth -= 1;
        Ok(Value::List(items))
    }

    fn string(&mut self, quote: char) -> PResult<String> {
        self.expect(quote)?;
        let mut out = String::new();
        loop {
            let c = self.peek().ok_or(())?;
            self.pos += 1;
            match c {
                c if c == quote => return Ok(out),
                '\\' => {
                    let e = self.peek().ok_or(())?;
                    self.pos += 1;
                    match e {
                        '\\' => out.push('\\'),
                        '"' => out.push('"'),
                        '\'' => out.push('\''),
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        other => {
                            out.push('\\');
                            out.push(other);
                        }
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> PResult<String> {
        let start = self.pos;
        self.eat('-');
        if self.digits() == 0 {
            return Err(());
        }
        if self.eat('.') && self.digits() == 0 {
            return Err(());
        }
        if self.peek().is_some_and(|c| c == 'e' || c == 'E') {
            self.pos += 1;
            if !self.eat('+') {
                self.eat('-');
            }
            if self.digits() == 0 {
                return Err(());
            }
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }
}

fn syntax(text: &str, opts: &ParseOptions) -> Option<Vec<Call>> {
    let chars: Vec<char> = text.chars().collect();
    let open = chars.iter().take(opts.max_prefix + 1).position(|&c| c == '[')?;
    let mut p = Parser {
        chars: &chars,
        pos: open,
        depth: 0,
        max_depth: opts.max_depth,
    };
    p.output().ok()
}

/// Converts a syntactic value to a field value; `None` when it cannot be one.
fn to_field_value(v: Value) -> Option<FieldValue> {
    match v {
        Value::Str(s) | Value::Num(s) => Some(FieldValue::Text(s)),
        Value::None => Some(FieldValue::Absent),
        Value::Call(_) => None,
        Value::List(items) => items
            .into_iter()
            .map(|i| match i {
                Value::Str(s) | Value::Num(s) => Some(s),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(FieldValue::TextList),
    }
}

pub fn parse_result(text: &str, schema: &TaskSchema) -> ParseOutcome {
    parse_result_with(text, schema, &ParseOptions::default())
}

pub fn parse_result_with(text: &str, schema: &TaskSchema, opts: &ParseOptions) -> ParseOutcome {
    let Some(calls) = syntax(text, opts) else {
        return ParseOutcome::unparseable(text);
    };
    let mut out = ParseOutcome {
        status: ParseStatus::Ok,
        annotations: Vec::new(),
        hallucinations: 0,
        hallucinated_labels: Vec::new(),
        filtered_fields: 0,
        validation_drops: 0,
        raw: text.to_string(),
    };
    for call in calls {
        let Some(def) = schema.label(&call.name) else {
            out.hallucinations += 1;
            out.hallucinated_labels.push(call.name);
            continue;
        };
        let mut values = BTreeMap::new();
        let mut malformed = false;
        for (key, value) in call.kwargs {
            if def.field(&key).is_none() {
                out.filtered_fields += 1;
                continue;
            }
            match to_field_value(value) {
                Some(v) => {
                    if values.insert(key, v).is_some() {
                        out.filtered_fields += 1;
                    }
                }
                None => malformed = true,
            }
        }
        let ann = Annotation {
            label: call.name,
            values,
        };
        if malformed || !validate_annotation(&ann, schema).is_empty() {
            out.validation_drops += 1;
        } else {
            out.annotations.push(ann);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub n: usize,
    pub unparseable: usize,
    pub hallucinations: usize,
    pub filtered_fields: usize,
    pub validation_drops: usize,
}

impl From<&ParseOutcome> for ParseStats {
    fn from(o: &ParseOutcome) -> Self {
        ParseStats {
            n: 1,
            unparseable: usize::from(o.status == ParseStatus::Unparseable),
            hallucinations: o.hallucinations,
            filtered_fields: o.filtered_fields,
            validation_drops: o.validation_drops,
        }
    }
}

impl Add for ParseStats {
    type Output = ParseStats;

    fn add(self, o: ParseStats) -> ParseStats {
        ParseStats {
            n: self.n + o.n,
            unparseable: self.unparseable + o.unparseable,
            hallucinations: self.hallucinations + o.hallucinations,
            filtered_fields: self.filtered_fields + o.filtered_fields,
            validation_drops: self.validation_drops + o.validation_drops,
        }
    }
}

impl AddAssign for ParseStats {
    fn add_assign(&mut self, o: ParseStats) {
        *self = *self + o;
    }
}

pub fn parse_stats<'a>(outcomes: impl IntoIterator<Item = &'a ParseOutcome>) -> ParseStats {
    outcomes
        .into_iter()
        .map(ParseStats::from)
        .fold(ParseStats::default(), Add::add)
}
