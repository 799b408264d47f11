use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use iecode::codegen::RenderOptions;
use iecode::ingest::{self, SpanCheck};
use iecode::llmclient::{ClientConfig, GenerationRecord};
use iecode::outparse::{ParseStats, ParseStatus};
use iecode::pipeline::{self, GenerationMode, ParsedRecord, PipelineError, RunManifest};
use iecode::regularize::{RegularizationConfig, RegularizationTrace};
use iecode::schema::{validate_schema, Document, TaskKind, TaskSchema};
use iecode::score::{LabelPartition, MatchPolicy, PartialCriterion, PartitionTable, ScoreReport, Scorer};

/// Compile IE schemas into code-style prompts, parse model output, score it.
#[derive(Parser)]
#[command(name = "iecode", version)]
struct Cli {
    /// Worker threads for per-document work (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for timestamped run reports.
    #[arg(long, global = true, default_value = "reports")]
    report_dir: PathBuf,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check a schema file, and optionally a corpus against it.
    Validate(ValidateArgs),
    /// Render documents into prompts without any regularization.
    Compile(CompileArgs),
    /// Render documents with seeded regularization.
    Augment(AugmentArgs),
    /// Parse generations into annotations.
    Parse(ParseArgs),
    /// Score predictions against gold.
    Score(ScoreArgs),
    /// Summarize a file of parse outcomes or documents.
    Stats(StatsArgs),
    /// Draw a seeded random subset of a JSON-lines file.
    Sample(SampleArgs),
    /// Compile, generate, parse and score in one go.
    Run(RunArgs),
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    /// Schema file (TOML).
    schema: PathBuf,
    /// Corpus files to check against the schema.
    #[arg(long = "docs")]
    docs: Vec<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
struct InputArgs {
    /// Schema file (TOML).
    #[arg(long)]
    schema: PathBuf,
    /// Input corpora: `.jsonl` documents or BIO files.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    /// BIO tag mapping, e.g. `PER=Person`. Repeatable.
    #[arg(long = "bio-tag", value_parser = parse_pair)]
    bio_tags: Vec<(String, String)>,
    /// Keep records whose spans are not found in the text (warn only).
    #[arg(long)]
    lenient_spans: bool,
}

#[derive(Args, Serialize, Clone)]
struct RenderArgs {
    /// Drop docstrings, field comments and candidates.
    #[arg(long)]
    baseline: bool,
    /// Omit candidate example lines.
    #[arg(long)]
    no_candidates: bool,
    /// Candidates shown per label.
    #[arg(long, default_value_t = 5)]
    candidates_k: usize,
    /// Docstring wrap column.
    #[arg(long, default_value_t = 80)]
    wrap: usize,
}

impl RenderArgs {
    fn options(&self) -> RenderOptions {
        RenderOptions {
            include_guidelines: !self.baseline,
            include_candidates: !self.no_candidates,
            candidates_k: self.candidates_k,
            wrap_column: self.wrap,
        }
    }
}

#[derive(Args, Serialize)]
struct CompileArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    render: RenderArgs,
    /// Output JSON-lines file of compiled examples.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    render: RenderArgs,
    #[arg(long)]
    out: PathBuf,
    /// Regularization config (TOML or JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-label dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Shuffle label order.
    #[arg(long, overrides_with = "no_shuffle")]
    shuffle: bool,
    #[arg(long)]
    no_shuffle: bool,
    /// Use a random guideline paraphrase per label.
    #[arg(long)]
    paraphrase: bool,
    /// Candidates sampled per label; 0 keeps the whole pool.
    #[arg(long)]
    candidates: Option<usize>,
    /// Per-example masking probability; bare `--mask` means 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "1.0")]
    mask: Option<f64>,
    #[arg(long)]
    no_mask: bool,
}

impl AugmentArgs {
    fn config(&self) -> Result<RegularizationConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => read_config::<RegularizationConfig>(p)?,
            None => RegularizationConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.dropout {
            cfg.dropout_p = d;
        }
        if self.shuffle {
            cfg.shuffle = true;
        }
        if self.no_shuffle {
            cfg.shuffle = false;
        }
        if self.paraphrase {
            cfg.paraphrase = true;
        }
        if let Some(k) = self.candidates {
            cfg.candidates_k = (k > 0).then_some(k);
        }
        if let Some(m) = self.mask {
            cfg.mask_prob = m;
        }
        if self.no_mask {
            cfg.mask_prob = 0.0;
        }
        cfg.check().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Serialize)]
struct ParseArgs {
    #[arg(long)]
    schema: PathBuf,
    /// JSON lines of `{doc_id, generation}`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON lines of parse outcomes.
    #[arg(long)]
    out: PathBuf,
    /// Generations continue after `result = [`; prepend the bracket.
    #[arg(long)]
    continuation: bool,
    /// Compiled corpus whose traces (masking, dropout) apply to the input.
    #[arg(long)]
    compiled: Option<PathBuf>,
    /// Also write the aggregate counts as a separate report.
    #[arg(long)]
    stats: bool,
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    /// Gold documents (JSON lines).
    #[arg(long)]
    gold: PathBuf,
    /// Predictions: parse outcomes or any `{doc_id, annotations}` lines.
    #[arg(long)]
    pred: PathBuf,
    /// exact, category or partial.
    #[arg(long, default_value = "exact")]
    policy: MatchPolicy,
    /// substring or jaccard:<threshold>, for the partial policy.
    #[arg(long, default_value = "substring")]
    partial: PartialCriterion,
    /// Schema, for span fields, task kind and gold validation.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Task kind when no schema is given (NER, RE, EE, EAE, SF, Custom).
    #[arg(long)]
    kind: Option<TaskKind>,
    /// Also score event arguments.
    #[arg(long)]
    arguments: bool,
    /// Split scores by the seen/unseen partition of this dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Partition table (TOML) replacing the built-in one.
    #[arg(long)]
    partitions: Option<PathBuf>,
    /// Machine-readable per-label rows (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    /// Parse outcome files.
    #[arg(long)]
    outcomes: Vec<PathBuf>,
    /// Document corpora (JSON lines).
    #[arg(long)]
    docs: Vec<PathBuf>,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(short, long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// Manifest from an earlier run; other flags override it.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long = "in")]
    inputs: Vec<PathBuf>,
    #[arg(long = "bio-tag", value_parser = parse_pair)]
    bio_tags: Vec<(String, String)>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Regularization config (TOML or JSON).
    #[arg(long)]
    regularization: Option<PathBuf>,
    /// Client config (TOML or JSON).
    #[arg(long)]
    client: Option<PathBuf>,
    /// Empty generations, no network.
    #[arg(long, conflicts_with = "gold_stub")]
    dry_run: bool,
    /// Gold continuations as generations, no network.
    #[arg(long)]
    gold_stub: bool,
    #[arg(long)]
    policy: Option<MatchPolicy>,
    #[arg(long)]
    arguments: bool,
    /// Split scores by this dataset's seen/unseen partition.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    baseline: bool,
}

impl RunArgs {
    fn manifest(&self) -> Result<RunManifest, CliError> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest {
                schema: self
                    .schema
                    .clone()
                    .ok_or_else(|| CliError::Config("--schema or --manifest is required".into()))?,
                corpus: Vec::new(),
                bio_tags: BTreeMap::new(),
                regularization: None,
                render: RenderOptions::default(),
                client: None,
                output_dir: self
                    .out_dir
                    .clone()
                    .ok_or_else(|| CliError::Config("--out-dir or --manifest is required".into()))?,
                seed: 0,
                mode: GenerationMode::Endpoint,
                policy: MatchPolicy::ExactSpan,
                arguments: false,
                partition: None,
            },
        };
        if let Some(s) = &self.schema {
            m.schema = s.clone();
        }
        if !self.inputs.is_empty() {
            m.corpus = self.inputs.clone();
        }
        if m.corpus.is_empty() {
            return Err(CliError::Config("no input corpus (--in)".into()));
        }
        m.bio_tags.extend(self.bio_tags.iter().cloned());
        if let Some(d) = &self.out_dir {
            m.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if let Some(p) = &self.regularization {
            m.regularization = Some(read_config(p)?);
        }
        if let Some(p) = &self.client {
            m.client = Some(read_config::<ClientConfig>(p)?);
        }
        if self.dry_run {
            m.mode = GenerationMode::DryRun;
        }
        if self.gold_stub {
            m.mode = GenerationMode::GoldStub;
        }
        if let Some(p) = self.policy {
            m.policy = p;
        }
        if self.arguments {
            m.arguments = true;
        }
        if let Some(d) = &self.dataset {
            m.partition = Some(builtin_partition(d)?);
        }
        if self.baseline {
            m.render.include_guidelines = false;
        }
        m.absolutize()?;
        Ok(m)
    }
}

#[derive(Debug)]
enum CliError {
    /// Bad input data; exit 1.
    Data(String),
    /// Bad usage or configuration; exit 2.
    Config(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.to_string(), v.to_string()))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn builtin_partition(dataset: &str) -> Result<LabelPartition, CliError> {
    PartitionTable::builtin()
        .get(dataset)
        .cloned()
        .ok_or_else(|| CliError::Config(format!("no partition for dataset `{dataset}`")))
}

fn load_inputs(schema: &TaskSchema, input: &InputArgs) -> Result<(Vec<Document>, usize), CliError> {
    let tags: BTreeMap<String, String> = input.bio_tags.iter().cloned().collect();
    let check = if input.lenient_spans {
        SpanCheck::Warn
    } else {
        SpanCheck::Strict
    };
    let mut docs = Vec::new();
    let mut rejected = 0;
    for p in &input.inputs {
        let (d, r) = pipeline::load_documents(p, schema, &tags, check)?;
        if r > 0 {
            eprintln!("{}: {r} record(s) rejected, see {}", p.display(), ingest::rejects_path(p).display());
        }
        docs.extend(d);
        rejected += r;
    }
    Ok((docs, rejected))
}

struct Outcome<B> {
    body: B,
    /// Data problems worth a non-zero exit after the outputs are written.
    data_errors: usize,
}

fn report<M: Serialize, B: Serialize>(cli: &Cli, verb: &str, manifest: &M, out: Outcome<B>) -> Result<usize, CliError> {
    let path = pipeline::write_report(&cli.report_dir, verb, manifest, &out.body)?;
    log::info!("report written to {}", path.display());
    Ok(out.data_errors)
}

#[derive(Serialize)]
struct CompileReport {
    documents: usize,
    rejected: usize,
    out: PathBuf,
}

fn cmd_validate(args: &ValidateArgs) -> Result<Outcome<serde_json::Value>, CliError> {
    let schema = TaskSchema::load(&args.schema).map_err(|e| CliError::Data(e.to_string()))?;
    let violations = validate_schema(&schema);
    for v in &violations {
        eprintln!("{}: {v}", args.schema.display());
    }
    let mut bad_docs = 0;
    let mut n_docs = 0;
    if violations.is_empty() {
        for p in &args.docs {
            let load = ingest::load_jsonl(p, &schema, SpanCheck::Strict)?;
            for r in &load.rejects {
                for v in &r.violations {
                    eprintln!("{}:{}: {v}", p.display(), r.line);
                }
            }
            n_docs += load.documents.len() + load.rejects.len();
            bad_docs += load.rejects.len();
        }
    }
    let errors = violations.len() + bad_docs;
    if errors == 0 {
        println!("ok: {} labels, {n_docs} documents", schema.labels.len());
    } else {
        println!("{} schema violation(s), {bad_docs} invalid document(s)", violations.len());
    }
    Ok(Outcome {
        body: serde_json::json!({
            "labels": schema.labels.len(),
            "schema_violations": violations,
            "documents": n_docs,
            "invalid_documents": bad_docs,
        }),
        data_errors: errors,
    })
}

fn compile_verb(
    input: &InputArgs,
    render: &RenderArgs,
    out: &Path,
    regularization: Option<&RegularizationConfig>,
    seed: u64,
) -> Result<Outcome<CompileReport>, CliError> {
    let schema = pipeline::load_valid_schema(&input.schema)?;
    let (docs, rejected) = load_inputs(&schema, input)?;
    let compiled = pipeline::compile(&schema, &docs, regularization, &render.options(), seed)?;
    ingest::write_corpus(out, &compiled)?;
    println!("compiled {} document(s), {rejected} rejected", compiled.len());
    Ok(Outcome {
        body: CompileReport {
            documents: compiled.len(),
            rejected,
            out: out.to_path_buf(),
        },
        data_errors: rejected,
    })
}

fn cmd_parse(cli: &Cli, args: &ParseArgs) -> Result<Outcome<ParseStats>, CliError> {
    let schema = pipeline::load_valid_schema(&args.schema)?;
    let generations: Vec<GenerationRecord> = ingest::read_jsonl(&args.input)?;
    let traces: HashMap<String, RegularizationTrace> = match &args.compiled {
        Some(p) => ingest::read_corpus(p)?
            .into_iter()
            .map(|c| (c.doc_id, c.trace))
            .collect(),
        None => HashMap::new(),
    };
    let parsed = pipeline::parse_generations(&schema, &generations, &traces, args.continuation);
    ingest::write_jsonl(&args.out, &parsed)?;
    let stats = iecode::outparse::parse_stats(parsed.iter().map(|p| &p.outcome));
    print_parse_stats(&stats);
    if args.stats {
        let path = pipeline::write_report(&cli.report_dir, "parse-stats", args, &stats)?;
        println!("stats written to {}", path.display());
    }
    Ok(Outcome {
        body: stats,
        data_errors: 0,
    })
}

fn print_parse_stats(s: &ParseStats) {
    println!(
        "outputs {}  unparseable {}  hallucinations {}  filtered_fields {}  validation_drops {}",
        s.n, s.unparseable, s.hallucinations, s.filtered_fields, s.validation_drops
    );
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    scope: &'a str,
    label: &'a str,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn score_rows<'a>(scope: &'a str, r: &'a ScoreReport, rows: &mut Vec<ScoreRow<'a>>) {
    let total = r.total();
    let iter = r.per_label.iter().map(|(l, c)| (l.as_str(), *c));
    for (label, c) in iter.chain([("micro", total)]) {
        rows.push(ScoreRow {
            scope,
            label,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        });
    }
}

fn cmd_score(args: &ScoreArgs) -> Result<Outcome<pipeline::CorpusScore>, CliError> {
    let (gold, scorer, rejected) = match &args.schema {
        Some(p) => {
            let schema = pipeline::load_valid_schema(p)?;
            let load = ingest::load_jsonl(&args.gold, &schema, SpanCheck::Warn)?;
            for r in &load.rejects {
                for v in &r.violations {
                    eprintln!("{}:{}: {v}", args.gold.display(), r.line);
                }
            }
            let scorer = Scorer::for_schema(args.policy, &schema).map_err(|e| CliError::Config(e.to_string()))?;
            (load.documents, scorer, load.rejects.len())
        }
        None => {
            let scorer = Scorer::new(args.policy, args.kind).map_err(|e| CliError::Config(e.to_string()))?;
            (ingest::read_documents(&args.gold)?, scorer, 0)
        }
    };
    let scorer = scorer.with_partial(args.partial);
    let partition = match (&args.dataset, &args.partitions) {
        (None, _) => None,
        (Some(d), None) => Some(builtin_partition(d)?),
        (Some(d), Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let table = PartitionTable::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Some(
                table
                    .get(d)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("no partition for dataset `{d}`")))?,
            )
        }
    };
    let preds = pipeline::read_predictions(&args.pred)?;
    let score = pipeline::score_corpus(&scorer, &gold, &preds, partition.as_ref(), args.arguments);
    print!("{}", pipeline::score_text(&score));
    if score.missing_predictions > 0 {
        eprintln!("{} gold document(s) have no prediction", score.missing_predictions);
    }
    if let Some(out) = &args.out {
        let mut rows = Vec::new();
        score_rows("all", &score.report, &mut rows);
        if let Some(a) = &score.arguments {
            score_rows("arguments", a, &mut rows);
        }
        if let Some(p) = &score.partitioned {
            score_rows("seen", &p.seen, &mut rows);
            score_rows("unseen", &p.unseen, &mut rows);
        }
        ingest::write_jsonl(out, &rows)?;
    }
    Ok(Outcome {
        body: score,
        data_errors: rejected,
    })
}

fn cmd_stats(args: &StatsArgs) -> Result<Outcome<serde_json::Value>, CliError> {
    if args.outcomes.is_empty() && args.docs.is_empty() {
        return Err(CliError::Config("give --outcomes and/or --docs".into()));
    }
    let mut parse = ParseStats::default();
    let mut unparseable_ids = Vec::new();
    for p in &args.outcomes {
        let recs: Vec<ParsedRecord> = ingest::read_jsonl(p)?;
        for r in &recs {
            parse += ParseStats::from(&r.outcome);
            if r.outcome.status == ParseStatus::Unparseable {
                unparseable_ids.push(r.doc_id.clone());
            }
        }
    }
    if !args.outcomes.is_empty() {
        print_parse_stats(&parse);
    }
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_docs = 0;
    for p in &args.docs {
        for d in ingest::read_documents(p)? {
            n_docs += 1;
            for a in &d.gold {
                *labels.entry(a.label.clone()).or_default() += 1;
            }
        }
    }
    if !args.docs.is_empty() {
        println!("documents {n_docs}  annotations {}", labels.values().sum::<usize>());
        for (l, n) in &labels {
            println!("  {l:<24} {n}");
        }
    }
    Ok(Outcome {
        body: serde_json::json!({
            "parse": parse,
            "unparseable_doc_ids": unparseable_ids,
            "documents": n_docs,
            "labels": labels,
        }),
        data_errors: 0,
    })
}

fn cmd_sample(args: &SampleArgs) -> Result<Outcome<serde_json::Value>, CliError> {
    let text = fs::read_to_string(&args.input).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let picked = ingest::sample(&rows, args.k, args.seed);
    let mut out = picked.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    fs::write(&args.out, out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    println!("sampled {} of {}", picked.len(), rows.len());
    Ok(Outcome {
        body: serde_json::json!({"input": rows.len(), "sampled": picked.len()}),
        data_errors: 0,
    })
}

fn cmd_run(args: &RunArgs) -> Result<(RunManifest, Outcome<pipeline::RunSummary>), CliError> {
    let manifest = args.manifest()?;
    let summary = pipeline::run(&manifest)?;
    print!("{}", pipeline::score_text(&summary.score));
    print_parse_stats(&summary.parse);
    println!(
        "documents {}  rejected {}  generation errors {}  outputs in {}",
        summary.documents,
        summary.rejected,
        summary.generation_errors,
        manifest.output_dir.display()
    );
    let data_errors = summary.rejected + summary.generation_errors;
    Ok((
        manifest,
        Outcome {
            body: summary,
            data_errors,
        },
    ))
}

fn dispatch(cli: &Cli) -> Result<usize, CliError> {
    match &cli.verb {
        Verb::Validate(a) => report(cli, "validate", a, cmd_validate(a)?),
        Verb::Compile(a) => report(cli, "compile", a, compile_verb(&a.input, &a.render, &a.out, None, a.seed)?),
        Verb::Augment(a) => {
            let cfg = a.config()?;
            let seed = cfg.seed;
            let out = compile_verb(&a.input, &a.render, &a.out, Some(&cfg), seed)?;
            let manifest = serde_json::json!({"args": a, "regularization": cfg});
            report(cli, "augment", &manifest, out)
        }
        Verb::Parse(a) => report(cli, "parse", a, cmd_parse(cli, a)?),
        Verb::Score(a) => report(cli, "score", a, cmd_score(a)?),
        Verb::Stats(a) => report(cli, "stats", a, cmd_stats(a)?),
        Verb::Sample(a) => report(cli, "sample", a, cmd_sample(a)?),
        Verb::Run(a) => {
            let (manifest, out) = cmd_run(a)?;
            report(cli, "run", &manifest, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} data error(s)");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
