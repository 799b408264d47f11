//! End-to-end orchestration: compile, generate, parse, score.
//!
//! Everything here is deterministic given its inputs except real network
//! generation. Per-document seeds are `derive_seed(base_seed, doc_index)`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{render_prompt, CompiledExample, RenderError, RenderOptions};
use crate::ingest::{self, BioOptions, IngestError, SpanCheck};
use crate::llmclient::{self, Client, ClientConfig, ClientError, GenerationRecord};
use crate::outparse::{parse_result, parse_stats, ParseOutcome, ParseStats, ParseStatus};
use crate::regularize::{self, RegularizationConfig, RegularizationTrace, RegularizeError};
use crate::rng::derive_seed;
use crate::schema::{validate_schema, Annotation, Document, SchemaFileError, TaskSchema, Violation};
use crate::score::{LabelPartition, MatchPolicy, PartitionedReport, ScoreError, ScoreReport, Scorer};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Schema(#[from] SchemaFileError),
    #[error("invalid schema: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidSchema(Vec<Violation>),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{doc_id}: {source}")]
    Render { doc_id: String, source: RenderError },
    #[error("{}{source}", prefix(.doc_id))]
    Regularize { doc_id: String, source: RegularizeError },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
}

fn prefix(doc_id: &str) -> String {
    if doc_id.is_empty() {
        String::new()
    } else {
        format!("{doc_id}: ")
    }
}

impl PipelineError {
    /// Usage/config problems, as opposed to bad data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            PipelineError::Client(_) | PipelineError::Config(_) | PipelineError::Score(ScoreError::PolicyMismatch(_))
        ) || matches!(
            self,
            PipelineError::Render {
                source: RenderError::WrapTooNarrow(_),
                ..
            } | PipelineError::Regularize {
                source: RegularizeError::InvalidConfig(_),
                ..
            }
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a schema file and rejects it when it violates any schema rule.
pub fn load_valid_schema(path: &Path) -> Result<TaskSchema, PipelineError> {
    let schema = TaskSchema::load(path)?;
    let v = validate_schema(&schema);
    if v.is_empty() {
        Ok(schema)
    } else {
        Err(PipelineError::InvalidSchema(v))
    }
}

/// Documents from a corpus file: `.jsonl` files go through the JSON-lines
/// loader (rejects written beside the input), anything else is read as BIO.
pub fn load_documents(
    path: &Path,
    schema: &TaskSchema,
    bio_tags: &BTreeMap<String, String>,
    span_check: SpanCheck,
) -> Result<(Vec<Document>, usize), PipelineError> {
    if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        let load = ingest::load_jsonl(path, schema, span_check)?;
        for w in &load.warnings {
            log::warn!("{}:{}: {}", path.display(), w.line, join_violations(&w.violations));
        }
        if !load.rejects.is_empty() {
            ingest::write_jsonl(&ingest::rejects_path(path), &load.rejects)?;
        }
        Ok((load.documents, load.rejects.len()))
    } else {
        let opts = BioOptions {
            columns: 2,
            tags: bio_tags.clone(),
        };
        Ok((ingest::load_bio(path, schema, &opts)?, 0))
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Renders every document, applying `regularization` (when given) with
/// per-document seeds. Output order follows input order.
pub fn compile(
    schema: &TaskSchema,
    docs: &[Document],
    regularization: Option<&RegularizationConfig>,
    render: &RenderOptions,
    seed: u64,
) -> Result<Vec<CompiledExample>, PipelineError> {
    if let Some(cfg) = regularization {
        cfg.check().map_err(|source| PipelineError::Regularize {
            doc_id: String::new(),
            source,
        })?;
    }
    docs.par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let doc_seed = derive_seed(seed, i as u64);
            let (schema_x, doc_x, trace) = match regularization {
                Some(cfg) => {
                    let cfg = RegularizationConfig {
                        seed: doc_seed,
                        ..cfg.clone()
                    };
                    let r = regularize::apply(schema, &doc.gold, &cfg).map_err(|source| PipelineError::Regularize {
                        doc_id: doc.doc_id.clone(),
                        source,
                    })?;
                    let d = Document {
                        gold: r.gold,
                        ..doc.clone()
                    };
                    (r.schema, d, r.trace)
                }
                None => (schema.clone(), doc.clone(), RegularizationTrace::identity(schema, doc_seed)),
            };
            render_prompt(&schema_x, &doc_x, render, &trace).map_err(|source| PipelineError::Render {
                doc_id: doc.doc_id.clone(),
                source,
            })
        })
        .collect()
}

/// Parses a generation against the schema its prompt was rendered with, then
/// maps masked labels back.
pub fn parse_generation(text: &str, schema: &TaskSchema, trace: Option<&RegularizationTrace>) -> ParseOutcome {
    let Some(trace) = trace else {
        return parse_result(text, schema);
    };
    let local = match regularize::replay(schema, trace) {
        Ok(s) => s,
        Err(_) => return parse_result(text, schema),
    };
    let mut out = parse_result(text, &local);
    if trace.is_masked() {
        // Every surviving label is a known placeholder, so unmasking cannot fail.
        out.annotations = regularize::unmask(&out.annotations, trace).unwrap_or_default();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedRecord {
    pub doc_id: String,
    #[serde(flatten)]
    pub outcome: ParseOutcome,
}

/// Parses continuation-style generations (text after `result = [`).
pub fn parse_generations(
    schema: &TaskSchema,
    generations: &[GenerationRecord],
    traces: &HashMap<String, RegularizationTrace>,
    continuation: bool,
) -> Vec<ParsedRecord> {
    generations
        .par_iter()
        .map(|g| {
            let text = if continuation { g.result_text() } else { g.generation.clone() };
            ParsedRecord {
                doc_id: g.doc_id.clone(),
                outcome: parse_generation(&text, schema, traces.get(&g.doc_id)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub report: ScoreReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arguments: Option<ScoreReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitioned: Option<PartitionedReport>,
    /// Gold documents with no prediction record; scored as empty predictions.
    pub missing_predictions: usize,
}

/// Sums per-document scores. Predictions are looked up by `doc_id`.
pub fn score_corpus(
    scorer: &Scorer,
    gold: &[Document],
    predictions: &HashMap<String, Vec<Annotation>>,
    partition: Option<&LabelPartition>,
    arguments: bool,
) -> CorpusScore {
    let mut out = CorpusScore {
        arguments: arguments.then(ScoreReport::default),
        partitioned: partition.map(|_| PartitionedReport::default()),
        ..Default::default()
    };
    let empty = Vec::new();
    for doc in gold {
        let pred = predictions.get(&doc.doc_id).unwrap_or_else(|| {
            out.missing_predictions += 1;
            &empty
        });
        out.report += scorer.score(&doc.gold, pred);
        if let Some(a) = out.arguments.as_mut() {
            *a += scorer.score_arguments(&doc.gold, pred);
        }
        if let (Some(p), Some(acc)) = (partition, out.partitioned.as_mut()) {
            *acc += scorer.score_partitioned(&doc.gold, pred, p);
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    doc_id: String,
    #[serde(default, alias = "gold")]
    annotations: Vec<Annotation>,
}

/// Reads prediction lines (`{doc_id, annotations, ...}`, e.g. parse outcomes)
/// keyed by `doc_id`. A later line for the same document replaces an earlier
/// one.
pub fn read_predictions(path: &Path) -> Result<HashMap<String, Vec<Annotation>>, PipelineError> {
    let rows: Vec<PredictionRow> = ingest::read_jsonl(path)?;
    Ok(rows.into_iter().map(|r| (r.doc_id, r.annotations)).collect())
}

/// How `run` produces generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Call the configured endpoint.
    #[default]
    Endpoint,
    /// Empty generations, no network.
    DryRun,
    /// Gold continuations, no network.
    GoldStub,
}

/// Everything needed to reproduce a `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: PathBuf,
    pub corpus: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bio_tags: BTreeMap<String, String>,
    #[serde(default)]
    pub regularization: Option<RegularizationConfig>,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default)]
    pub client: Option<ClientConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: GenerationMode,
    pub policy: MatchPolicy,
    #[serde(default)]
    pub arguments: bool,
    #[serde(default)]
    pub partition: Option<LabelPartition>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&s).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Makes input paths absolute so the manifest works from any directory.
    pub fn absolutize(&mut self) -> Result<(), PipelineError> {
        self.schema = fs::canonicalize(&self.schema).map_err(io_err(&self.schema))?;
        for p in &mut self.corpus {
            *p = fs::canonicalize(&*p).map_err(io_err(p))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub documents: usize,
    pub rejected: usize,
    pub generation_errors: usize,
    pub parse: ParseStats,
    pub score: CorpusScore,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Runs compile, generate, parse and score, writing every stage under
/// `manifest.output_dir`.
pub fn run(manifest: &RunManifest) -> Result<RunSummary, PipelineError> {
    let schema = load_valid_schema(&manifest.schema)?;
    let scorer = Scorer::for_schema(manifest.policy, &schema)?;
    let client = match manifest.mode {
        GenerationMode::Endpoint => {
            let cfg = manifest
                .client
                .clone()
                .ok_or_else(|| PipelineError::Config("no client config; use --dry-run or provide one".into()))?;
            Some(Client::new(cfg)?)
        }
        _ => None,
    };

    let mut docs = Vec::new();
    let mut rejected = 0;
    for path in &manifest.corpus {
        let (d, r) = load_documents(path, &schema, &manifest.bio_tags, SpanCheck::Strict)?;
        docs.extend(d);
        rejected += r;
    }

    let out = &manifest.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    fs::write(out.join(MANIFEST_FILE), manifest.to_json()).map_err(io_err(out))?;

    let compiled = compile(&schema, &docs, manifest.regularization.as_ref(), &manifest.render, manifest.seed)?;
    ingest::write_corpus(&out.join("compiled.jsonl"), &compiled)?;

    let generations = match (&client, manifest.mode) {
        (Some(c), _) => c.generate_blocking(&compiled),
        (None, GenerationMode::GoldStub) => llmclient::gold_echo(&compiled),
        (None, _) => llmclient::dry_run(&compiled),
    };
    ingest::write_jsonl(&out.join("generations.jsonl"), &generations)?;

    let traces: HashMap<String, RegularizationTrace> =
        compiled.iter().map(|c| (c.doc_id.clone(), c.trace.clone())).collect();
    let parsed = parse_generations(&schema, &generations, &traces, true);
    ingest::write_jsonl(&out.join("outcomes.jsonl"), &parsed)?;
    let stats = parse_stats(parsed.iter().map(|p| &p.outcome));
    write_json(&out.join("parse_stats.json"), &stats)?;

    let predictions: HashMap<String, Vec<Annotation>> = parsed
        .into_iter()
        .map(|p| (p.doc_id, p.outcome.annotations))
        .collect();
    // Regularized gold is what the model was asked for; unmasked for scoring.
    let gold_docs: Vec<Document> = if manifest.regularization.is_some() {
        docs.iter()
            .zip(&compiled)
            .map(|(d, c)| Document {
                gold: d.gold.iter().filter(|a| !c.trace.dropped.contains(&a.label)).cloned().collect(),
                ..d.clone()
            })
            .collect()
    } else {
        docs.clone()
    };
    let score = score_corpus(
        &scorer,
        &gold_docs,
        &predictions,
        manifest.partition.as_ref(),
        manifest.arguments,
    );
    write_json(&out.join("scores.json"), &score)?;
    fs::write(out.join("scores.txt"), score_text(&score)).map_err(io_err(out))?;

    Ok(RunSummary {
        documents: docs.len(),
        rejected,
        generation_errors: generations.iter().filter(|g| g.error.is_some()).count(),
        parse: stats,
        score,
    })
}

/// Human-readable rendering of a corpus score.
pub fn score_text(score: &CorpusScore) -> String {
    let mut s = score.report.table();
    if let Some(a) = &score.arguments {
        s.push_str("\narguments\n");
        s.push_str(&a.table());
    }
    if let Some(p) = &score.partitioned {
        s.push_str("\nseen\n");
        s.push_str(&p.seen.table());
        s.push_str("\nunseen\n");
        s.push_str(&p.unseen.table());
        s.push_str(&format!("\nuncovered predictions: {}\n", p.uncovered_pred));
    }
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let s = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, s).map_err(io_err(path))
}

/// Count of parse outcomes that failed.
pub fn unparseable(records: &[ParsedRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.outcome.status == ParseStatus::Unparseable)
        .count()
}

#[derive(Serialize)]
struct ReportEnvelope<'a, M: Serialize, B: Serialize> {
    tool: &'static str,
    version: &'static str,
    verb: &'a str,
    created_at: String,
    manifest: &'a M,
    report: &'a B,
}

/// Writes `<dir>/<verb>-<UTC timestamp>.json`, never replacing an existing
/// file. Returns the path written.
pub fn write_report<M: Serialize, B: Serialize>(
    dir: &Path,
    verb: &str,
    manifest: &M,
    body: &B,
) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let now = chrono::Utc::now();
    let stamp = now.format("%Y%m%dT%H%M%S%.3fZ");
    let envelope = ReportEnvelope {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        verb,
        created_at: now.to_rfc3339(),
        manifest,
        report: body,
    };
    let text = serde_json::to_string_pretty(&envelope).expect("serializable") + "\n";
    for n in 0.. {
        let name = if n == 0 {
            format!("{verb}-{stamp}.json")
        } else {
            format!("{verb}-{stamp}-{n}.json")
        };
        let path = dir.join(name);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                f.write_all(text.as_bytes()).map_err(io_err(&path))?;
                return Ok(path);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&path)(e)),
        }
    }
    unreachable!()
}
