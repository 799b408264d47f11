//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{checks, fixture, runner, KINDS};
use iecode::ingest::{self, SpanCheck};
use iecode::llmclient::GenerationRecord;
use iecode::outparse::{parse_result, parse_stats, ParseStats};
use iecode::pipeline;
use iecode::schema::{Annotation, TaskKind, TaskSchema};
use iecode::score::{Counts, LabelPartition, MatchPolicy, PartitionTable, Scorer};
use proptest::prelude::*;
use proptest::strategy::Strategy;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn run_cases<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let n = Cell::new(0);
    runner(cases)
        .run(&strategy, |v| {
            n.set(n.get() + 1);
            check(v)
        })
        .map_err(|e| e.to_string())?;
    Ok(n.get())
}

fn c1_round_trip() -> Verdict {
    let start = Instant::now();
    let mut total = 0;
    for (i, kind) in KINDS.iter().enumerate() {
        // 1000 cases split across the kinds.
        let cases = 1000 / KINDS.len() as u32 + u32::from((i as u32) < 1000 % KINDS.len() as u32);
        let strategy = common::schema_of(*kind).prop_flat_map(|s| {
            let g = common::gold_for(&s, 6);
            (Just(s), g)
        });
        total += run_cases(cases, strategy, |(s, g)| checks::round_trip(&s, &g))?;
    }
    let elapsed = start.elapsed();
    if total < 1000 {
        return Err(format!("only {total} cases ran"));
    }
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("{total} round trips took {elapsed:.2?} (limit 10 s)"));
    }
    Ok(format!("{total} round trips over {} task kinds in {elapsed:.2?}", KINDS.len()))
}

fn c2_golden() -> Verdict {
    let cases = common::golden::cases();
    if cases.len() < 5 {
        return Err(format!("only {} golden files", cases.len()));
    }
    let bad: Vec<&str> = cases
        .iter()
        .filter(|c| c.rendered != c.expected)
        .map(|c| c.name.as_str())
        .collect();
    if !bad.is_empty() {
        return Err(format!("mismatch: {}", bad.join(", ")));
    }
    Ok(format!("{} golden prompts byte-identical", cases.len()))
}

fn c3_regularization() -> Verdict {
    const N: u32 = 200;
    let seeded = || (common::schema_and_gold(), any::<u64>());
    let mut parts = Vec::new();
    let n = run_cases(N, seeded(), |((s, g), seed)| checks::dropout(&s, &g, seed)).map_err(|e| format!("dropout: {e}"))?;
    parts.push(format!("dropout {n}"));
    let n = run_cases(N, (common::any_schema(), any::<u64>()), |(s, seed)| checks::shuffle(&s, seed))
        .map_err(|e| format!("shuffle: {e}"))?;
    parts.push(format!("shuffle {n}"));
    let n = run_cases(N, (common::any_schema(), any::<u64>()), |(s, seed)| checks::candidates(&s, seed))
        .map_err(|e| format!("candidates: {e}"))?;
    parts.push(format!("candidates {n}"));
    let n = run_cases(N, seeded(), |((s, g), seed)| checks::mask_unmask(&s, &g, seed)).map_err(|e| format!("mask: {e}"))?;
    parts.push(format!("mask/unmask {n}"));
    let n = run_cases(N, seeded(), |((s, g), seed)| checks::seed_determinism(&s, &g, seed))
        .map_err(|e| format!("seeds: {e}"))?;
    parts.push(format!("seed determinism {n}"));
    Ok(parts.join(", "))
}

fn c4_parse_semantics() -> Verdict {
    let schema = TaskSchema::load(&fixture("fixtures/parse_corpus/schema.toml")).map_err(|e| e.to_string())?;
    let gens: Vec<GenerationRecord> =
        ingest::read_jsonl(&fixture("fixtures/parse_corpus/generations.jsonl")).map_err(|e| e.to_string())?;
    if gens.len() != 10 {
        return Err(format!("corpus has {} outputs", gens.len()));
    }
    let outcomes: Vec<_> = gens.iter().map(|g| parse_result(&g.generation, &schema)).collect();
    let stats = parse_stats(&outcomes);
    let want = ParseStats {
        n: 10,
        unparseable: 2,
        hallucinations: 1,
        filtered_fields: 1,
        validation_drops: 0,
    };
    if stats != want {
        return Err(format!("got {stats:?}"));
    }

    let fuzz = prop_oneof![
        "\\PC{0,120}",
        ".{0,60}",
        "[\\[\\](){}=,\"'\\\\ a-zA-Z0-9_\n]{0,120}",
        prop::collection::vec(
            prop::sample::select(vec!["[", "]", "(", ")", "Person", "Location", "span", "=", "\"", "'", ",", "None", "1.5", " ", "\\"]),
            0..60
        )
        .prop_map(|v| v.concat()),
    ];
    let crashes = Cell::new(0);
    let n = run_cases(10_000, fuzz, |s: String| {
        if catch_unwind(AssertUnwindSafe(|| parse_result(&s, &schema))).is_err() {
            crashes.set(crashes.get() + 1);
        }
        Ok(())
    })?;
    let crashes = crashes.get();
    if crashes > 0 {
        return Err(format!("{crashes} crashes in {n} fuzz inputs"));
    }
    Ok(format!(
        "unparseable {} / hallucinations {} / filtered_fields {}; {n} fuzz inputs, 0 crashes",
        stats.unparseable, stats.hallucinations, stats.filtered_fields
    ))
}

fn exact_f1(c: Counts) -> (usize, usize) {
    (2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

fn c5_scorer() -> Verdict {
    let n = run_cases(500, (common::small_anns(6), common::small_anns(6)), |(g, p)| {
        checks::greedy_is_maximum(&g, &p)
    })?;
    let scorer = Scorer::new(MatchPolicy::ExactSpan, Some(TaskKind::Ner)).map_err(|e| e.to_string())?;
    let a = |l: &str, s: &str| Annotation::new(l).with("span", s);
    let gold = vec![a("Person", "Ann"), a("Person", "Bob")];
    let perfect = scorer.score(&gold, &gold).total();
    let disjoint = scorer.score(&gold, &[a("Person", "Cy")]).total();
    let half = scorer.score(&gold, &[a("Person", "Ann"), a("Location", "Rome")]).total();
    if perfect.f1() != 1.0 || exact_f1(perfect) != (4, 4) {
        return Err(format!("perfect F1 {}", perfect.f1()));
    }
    if disjoint.f1() != 0.0 || disjoint.tp != 0 {
        return Err(format!("disjoint F1 {}", disjoint.f1()));
    }
    if (half.tp, half.fp, half.fn_) != (1, 1, 1) || exact_f1(half) != (2, 4) || (half.f1() - 0.5).abs() > 1e-12 {
        return Err(format!("fixture {half:?} F1 {}", half.f1()));
    }
    Ok(format!("{n} oracle cases agree; F1 spot checks 1.0 / 0.0 / 0.5"))
}

fn c6_partitions() -> Verdict {
    let table = PartitionTable::builtin();
    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let bt = table.get("BroadTwitter").ok_or("BroadTwitter missing")?;
    if bt.seen != set(&["Location", "Organization", "Person"]) || !bt.unseen.is_empty() {
        return Err(format!("BroadTwitter: {bt:?}"));
    }
    let hv = table.get("HarveyNER").ok_or("HarveyNER missing")?;
    if !hv.seen.is_empty() || hv.unseen != set(&["Point", "Area", "Road", "River"]) {
        return Err(format!("HarveyNER: {hv:?}"));
    }

    let p: &LabelPartition = table.get("MultiNERD").ok_or("MultiNERD missing")?;
    let scorer = Scorer::new(MatchPolicy::ExactSpan, Some(TaskKind::Ner)).map_err(|e| e.to_string())?;
    let mut gold_docs = Vec::new();
    let mut preds = HashMap::new();
    for (i, (seen, unseen)) in p.seen.iter().zip(p.unseen.iter().cycle()).enumerate() {
        let id = format!("syn-{i}");
        let gold = vec![
            Annotation::new(seen.as_str()).with("span", format!("s{i}")),
            Annotation::new(unseen.as_str()).with("span", format!("u{i}")),
        ];
        let pred = vec![
            Annotation::new(seen.as_str()).with("span", format!("s{i}")),
            Annotation::new(unseen.as_str()).with("span", format!("wrong{i}")),
        ];
        gold_docs.push(iecode::schema::Document {
            doc_id: id.clone(),
            text: String::new(),
            gold,
        });
        preds.insert(id, pred);
    }
    let score = pipeline::score_corpus(&scorer, &gold_docs, &preds, Some(p), false);
    let part = score.partitioned.ok_or("no partitioned report")?;
    let (seen_f1, unseen_f1) = (part.seen.micro().f1, part.unseen.micro().f1);
    if seen_f1 != 1.0 || unseen_f1 != 0.0 {
        return Err(format!("seen F1 {seen_f1}, unseen F1 {unseen_f1}"));
    }
    Ok(format!(
        "BroadTwitter and HarveyNER rows match; seen F1 {seen_f1:.1}, unseen F1 {unseen_f1:.1} over {} documents",
        gold_docs.len()
    ))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c7_dry_run() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_iecode");
    let schema = fixture("fixtures/dryrun/schema.toml");
    let docs = fixture("fixtures/dryrun/docs.jsonl");
    let n_docs = fs::read_to_string(&docs).map_err(|e| e.to_string())?.lines().count();
    let start = Instant::now();
    let first = Command::new(bin)
        .current_dir(tmp.path())
        .args(["run", "--schema", schema.to_str().unwrap(), "--in", docs.to_str().unwrap()])
        .args(["--out-dir", "out", "--dry-run", "--seed", "11", "--policy", "exact"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !first.status.success() {
        return Err(format!("run failed: {}", String::from_utf8_lossy(&first.stderr)));
    }
    if elapsed >= Duration::from_secs(30) {
        return Err(format!("run took {elapsed:.2?} (limit 30 s)"));
    }
    let out = tmp.path().join("out");
    let snapshot = read_tree(&out);
    for f in ["manifest.json", "compiled.jsonl", "generations.jsonl", "outcomes.jsonl", "scores.json"] {
        if !snapshot.contains_key(f) {
            return Err(format!("{f} not written"));
        }
    }
    let lines = snapshot["outcomes.jsonl"].iter().filter(|&&b| b == b'\n').count();
    if n_docs != 100 || lines != 100 {
        return Err(format!("{n_docs} documents in, {lines} outcomes out"));
    }
    let second = Command::new(bin)
        .current_dir(tmp.path())
        .args(["run", "--manifest", "out/manifest.json"])
        .output()
        .map_err(|e| e.to_string())?;
    if !second.status.success() {
        return Err(format!("rerun failed: {}", String::from_utf8_lossy(&second.stderr)));
    }
    let again = read_tree(&out);
    if again != snapshot {
        let diff: Vec<&String> = snapshot.keys().filter(|k| again.get(*k) != snapshot.get(*k)).collect();
        return Err(format!("rerun differs in {diff:?}"));
    }
    Ok(format!(
        "{n_docs} documents in {elapsed:.2?}; rerun from manifest byte-identical ({} files)",
        snapshot.len()
    ))
}

fn c8_category_monotone() -> Verdict {
    let schema = TaskSchema::load(&fixture("fixtures/events/schema.toml")).map_err(|e| e.to_string())?;
    let load = ingest::load_jsonl(&fixture("fixtures/events/gold.jsonl"), &schema, SpanCheck::Strict)
        .map_err(|e| e.to_string())?;
    if !load.rejects.is_empty() {
        return Err(format!("{} gold rejects", load.rejects.len()));
    }
    let preds = pipeline::read_predictions(&fixture("fixtures/events/pred.jsonl")).map_err(|e| e.to_string())?;
    let exact = Scorer::for_schema(MatchPolicy::ExactSpan, &schema).map_err(|e| e.to_string())?;
    let category = Scorer::for_schema(MatchPolicy::CategoryOnly, &schema).map_err(|e| e.to_string())?;
    let mut strictly = 0;
    for doc in &load.documents {
        let pred = preds.get(&doc.doc_id).ok_or(format!("{}: no prediction", doc.doc_id))?;
        let e = exact.score(&doc.gold, pred).total();
        let c = category.score(&doc.gold, pred).total();
        if c.f1() < e.f1() || c.tp < e.tp {
            return Err(format!("{}: category {c:?} below exact {e:?}", doc.doc_id));
        }
        if c.f1() > e.f1() {
            strictly += 1;
        }
    }
    Ok(format!(
        "{} documents, category >= exact on all ({strictly} strictly higher)",
        load.documents.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("round-trip fidelity", c1_round_trip),
        ("golden prompts", c2_golden),
        ("regularization contract", c3_regularization),
        ("parse failure semantics", c4_parse_semantics),
        ("scorer oracle", c5_scorer),
        ("seen/unseen partitions", c6_partitions),
        ("end-to-end dry run", c7_dry_run),
        ("category >= exact", c8_category_monotone),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
