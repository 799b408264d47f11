//! Dataset loaders and compiled-corpus persistence.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::CompiledExample;
use crate::rng::SeededRng;
use crate::schema::{validate_annotation, Annotation, Document, FieldValue, TaskSchema, Violation};

/// One persisted line of a compiled corpus.
pub type CorpusRecord = CompiledExample;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown tag `{tag}`")]
    UnknownTag { path: PathBuf, line: usize, tag: String },
    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| IngestError::io(path, e))
}

/// Column layout and tag table for CoNLL-style input.
#[derive(Debug, Clone)]
pub struct BioOptions {
    /// Columns per token line. The token is the first column, the tag the last.
    pub columns: usize,
    /// Tag suffix (`PER`) to schema label (`Person`).
    pub tags: BTreeMap<String, String>,
}

impl BioOptions {
    pub fn new(tags: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>) -> Self {
        BioOptions {
            columns: 2,
            tags: tags.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

/// Reads a token-per-line BIO/BIO2 file; each blank-line separated sentence
/// becomes one document named `<file stem>-<n>`. Tokens are joined by single
/// spaces. An `I-` tag that does not continue a span of the same type opens a
/// new one.
pub fn load_bio(path: &Path, schema: &TaskSchema, opts: &BioOptions) -> Result<Vec<Document>, IngestError> {
    let stem = path
        .file_stem()
        .map_or_else(|| "doc".to_string(), |s| s.to_string_lossy().into_owned());
    let mut docs = Vec::new();
    let mut sentence: Vec<(String, Tag)> = Vec::new();
    let flush = |sentence: &mut Vec<(String, Tag)>, docs: &mut Vec<Document>| {
        if sentence.is_empty() {
            return;
        }
        docs.push(sentence_to_document(
            format!("{stem}-{}", docs.len()),
            sentence,
            schema,
        ));
        sentence.clear();
    };
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut sentence, &mut docs);
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != opts.columns {
            return Err(IngestError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno,
                expected: opts.columns,
                found: cols.len(),
            });
        }
        let raw = cols[cols.len() - 1];
        let tag = parse_tag(raw, &opts.tags).ok_or_else(|| IngestError::UnknownTag {
            path: path.to_path_buf(),
            line: lineno,
            tag: raw.to_string(),
        })?;
        sentence.push((cols[0].to_string(), tag));
    }
    flush(&mut sentence, &mut docs);
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

fn parse_tag(raw: &str, table: &BTreeMap<String, String>) -> Option<Tag> {
    if raw == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, suffix) = raw.split_once('-')?;
    let label = table.get(suffix)?.clone();
    match prefix {
        "B" => Some(Tag::Begin(label)),
        "I" => Some(Tag::Inside(label)),
        _ => None,
    }
}

fn sentence_to_document(doc_id: String, sentence: &[(String, Tag)], schema: &TaskSchema) -> Document {
    let mut spans: Vec<(String, Vec<&str>)> = Vec::new();
    let mut open = false;
    for (token, tag) in sentence {
        match tag {
            Tag::Outside => open = false,
            Tag::Inside(l) if open && spans.last().is_some_and(|(cur, _)| cur == l) => {
                spans.last_mut().unwrap().1.push(token);
            }
            Tag::Begin(l) | Tag::Inside(l) => {
                spans.push((l.clone(), vec![token]));
                open = true;
            }
        }
    }
    let text = sentence
        .iter()
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let gold = spans
        .into_iter()
        .map(|(label, tokens)| {
            let field = schema
                .label(&label)
                .and_then(|l| l.span_field())
                .map_or("span", |f| f.name.as_str())
                .to_string();
            Annotation::new(label).with(field, tokens.join(" "))
        })
        .collect();
    Document { doc_id, text, gold }
}

/// How the span-in-text check treats violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpanCheck {
    /// Reject the record.
    #[default]
    Strict,
    /// Keep the record, report a warning.
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub doc_id: Option<String>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JsonlLoad {
    pub documents: Vec<Document>,
    pub rejects: Vec<Reject>,
    /// Span-check violations on records kept under [`SpanCheck::Warn`].
    pub warnings: Vec<Reject>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    doc_id: String,
    text: String,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

impl RawRecord {
    fn into_document(self) -> Document {
        Document {
            doc_id: self.doc_id,
            text: self.text,
            gold: self
                .annotations
                .into_iter()
                .map(|a| Annotation {
                    label: a.label,
                    values: a.values,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    label: String,
    #[serde(default)]
    values: BTreeMap<String, FieldValue>,
}

/// Reads `{doc_id, text, annotations: [{label, values}]}` lines. Records with
/// an invalid annotation are routed to `rejects`; malformed JSON is an error.
pub fn load_jsonl(path: &Path, schema: &TaskSchema, span_check: SpanCheck) -> Result<JsonlLoad, IngestError> {
    let mut out = JsonlLoad::default();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| IngestError::Syntax {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let doc = raw.into_document();
        let violations: Vec<Violation> = doc
            .gold
            .iter()
            .flat_map(|a| validate_annotation(a, schema))
            .collect();
        if !violations.is_empty() {
            out.rejects.push(Reject {
                line: lineno,
                doc_id: Some(doc.doc_id),
                violations,
            });
            continue;
        }
        let span_violations = doc.span_violations(schema);
        if !span_violations.is_empty() {
            let r = Reject {
                line: lineno,
                doc_id: Some(doc.doc_id.clone()),
                violations: span_violations,
            };
            if span_check == SpanCheck::Strict {
                out.rejects.push(r);
                continue;
            }
            out.warnings.push(r);
        }
        out.documents.push(doc);
    }
    Ok(out)
}

/// `<input>.rejects.jsonl` next to the input file.
pub fn rejects_path(input: &Path) -> PathBuf {
    let mut name = input.as_os_str().to_owned();
    name.push(".rejects.jsonl");
    PathBuf::from(name)
}

/// Generic JSON-lines writer: one compact object per line, LF endings.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| IngestError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| IngestError::io(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IngestError::Syntax {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), IngestError> {
    write_jsonl(path, records)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>, IngestError> {
    read_jsonl(path)
}

/// Reads `load_jsonl`-shaped lines without any schema checks.
pub fn read_documents(path: &Path) -> Result<Vec<Document>, IngestError> {
    let raw: Vec<RawRecord> = read_jsonl(path)?;
    Ok(raw.into_iter().map(RawRecord::into_document).collect())
}

/// Writes documents in the same shape `load_jsonl` reads.
pub fn write_documents(path: &Path, docs: &[Document]) -> Result<(), IngestError> {
    #[derive(Serialize)]
    struct Out<'a> {
        doc_id: &'a str,
        text: &'a str,
        annotations: &'a [Annotation],
    }
    let rows: Vec<Out> = docs
        .iter()
        .map(|d| Out {
            doc_id: &d.doc_id,
            text: &d.text,
            annotations: &d.gold,
        })
        .collect();
    write_jsonl(path, &rows)
}

/// `k` items chosen uniformly without replacement, kept in input order.
pub fn sample<T: Clone>(items: &[T], k: usize, seed: u64) -> Vec<T> {
    let mut idx = SeededRng::new(seed).sample_indices(items.len(), k);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}
