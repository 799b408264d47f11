#![allow(dead_code)]

use std::path::PathBuf;

use iecode::schema::{Annotation, FieldDef, FieldType, FieldValue, LabelDef, Parent, TaskKind, TaskSchema};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub mod golden;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

/// Deterministic runner so reruns see the same cases.
pub fn runner(cases: u32) -> TestRunner {
    let cfg = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub const KINDS: [TaskKind; 6] = [
    TaskKind::Ner,
    TaskKind::Re,
    TaskKind::Ee,
    TaskKind::Eae,
    TaskKind::Sf,
    TaskKind::Custom,
];

/// Text values, biased toward characters the renderer must escape.
pub fn text_value() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[A-Za-z0-9 .,'-]{0,12}",
        1 => "[\"\\\\\n\t a-z]{0,8}",
        1 => "\\PC{0,10}",
    ]
}

fn value_for(ftype: FieldType) -> BoxedStrategy<Option<FieldValue>> {
    let list = prop::collection::vec(text_value(), 0..4);
    match ftype {
        FieldType::Span | FieldType::Text => text_value().prop_map(|s| Some(FieldValue::Text(s))).boxed(),
        FieldType::TextList => list.prop_map(|v| Some(FieldValue::TextList(v))).boxed(),
        FieldType::OptionalText => prop_oneof![
            Just(None),
            Just(Some(FieldValue::Absent)),
            text_value().prop_map(|s| Some(FieldValue::Text(s))),
        ]
        .boxed(),
        FieldType::OptionalTextList => prop_oneof![
            Just(None),
            Just(Some(FieldValue::Absent)),
            list.prop_map(|v| Some(FieldValue::TextList(v))),
        ]
        .boxed(),
    }
}

fn arg_type() -> impl Strategy<Value = FieldType> {
    prop_oneof![
        Just(FieldType::Text),
        Just(FieldType::TextList),
        Just(FieldType::OptionalText),
        Just(FieldType::OptionalTextList),
    ]
}

/// Non-span fields for a label of the given kind.
fn extra_fields(kind: TaskKind) -> BoxedStrategy<Vec<FieldType>> {
    match kind {
        TaskKind::Ner | TaskKind::Ee => Just(vec![]).boxed(),
        TaskKind::Re => Just(vec![FieldType::Text]).boxed(),
        TaskKind::Eae => prop::collection::vec(
            prop_oneof![Just(FieldType::TextList), Just(FieldType::OptionalTextList)],
            0..4,
        )
        .boxed(),
        TaskKind::Sf => prop::collection::vec(
            prop_oneof![Just(FieldType::OptionalText), Just(FieldType::OptionalTextList)],
            0..4,
        )
        .boxed(),
        TaskKind::Custom => prop::collection::vec(arg_type(), 0..4).boxed(),
    }
}

fn parent_for(kind: TaskKind) -> Parent {
    match kind {
        TaskKind::Ner => Parent::Entity,
        TaskKind::Re => Parent::Relation,
        TaskKind::Ee | TaskKind::Eae => Parent::Event,
        TaskKind::Sf | TaskKind::Custom => Parent::Template,
    }
}

fn span_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Ner => "span",
        TaskKind::Re => "arg1",
        TaskKind::Sf => "query",
        _ => "mention",
    }
}

fn label_for(kind: TaskKind, index: usize) -> impl Strategy<Value = LabelDef> {
    (
        "[A-Z][a-z]{0,6}",
        extra_fields(kind),
        "[a-z ,.]{0,60}",
        prop::collection::vec("[a-z ]{1,20}", 0..3),
        prop::collection::btree_set("[a-z]{1,6}", 0..12),
    )
        .prop_map(move |(stem, extras, guideline, paraphrases, candidates)| {
            let mut fields = vec![FieldDef::new(span_name(kind), FieldType::Span, "anchor")];
            for (j, t) in extras.into_iter().enumerate() {
                let name = if kind == TaskKind::Re { "arg2".to_string() } else { format!("f{j}") };
                fields.push(FieldDef::new(name, t, ""));
            }
            LabelDef {
                name: format!("{stem}{index}"),
                parent: parent_for(kind),
                guideline,
                paraphrases,
                candidates: candidates.into_iter().collect(),
                fields,
            }
        })
}

pub fn schema_of(kind: TaskKind) -> BoxedStrategy<TaskSchema> {
    (1usize..6)
        .prop_flat_map(move |n| (0..n).map(|i| label_for(kind, i)).collect::<Vec<_>>())
        .prop_map(move |labels| TaskSchema {
            dataset_id: "gen".into(),
            kind,
            labels,
        })
        .boxed()
}

pub fn any_schema() -> BoxedStrategy<TaskSchema> {
    prop::sample::select(KINDS.to_vec()).prop_flat_map(schema_of).boxed()
}

pub fn annotation_for(label: &LabelDef) -> BoxedStrategy<Annotation> {
    let name = label.name.clone();
    let fields: Vec<(String, BoxedStrategy<Option<FieldValue>>)> = label
        .fields
        .iter()
        .map(|f| (f.name.clone(), value_for(f.ftype)))
        .collect();
    let names: Vec<String> = fields.iter().map(|(n, _)| n.clone()).collect();
    let values: Vec<_> = fields.into_iter().map(|(_, s)| s).collect();
    values
        .prop_map(move |vals| {
            let mut a = Annotation::new(name.clone());
            for (n, v) in names.iter().zip(vals) {
                if let Some(v) = v {
                    a.values.insert(n.clone(), v);
                }
            }
            a
        })
        .boxed()
}

/// Up to `max` annotations over the schema's labels.
pub fn gold_for(schema: &TaskSchema, max: usize) -> BoxedStrategy<Vec<Annotation>> {
    let per_label: Vec<BoxedStrategy<Annotation>> = schema.labels.iter().map(annotation_for).collect();
    prop::collection::vec(prop::sample::select((0..per_label.len()).collect::<Vec<_>>()), 0..=max)
        .prop_flat_map(move |picks| picks.into_iter().map(|i| per_label[i].clone()).collect::<Vec<_>>())
        .boxed()
}

pub fn schema_and_gold() -> BoxedStrategy<(TaskSchema, Vec<Annotation>)> {
    any_schema()
        .prop_flat_map(|s| {
            let g = gold_for(&s, 6);
            (Just(s), g)
        })
        .boxed()
}

/// A small bag of `(label, span)` annotations over a tiny alphabet so that
/// collisions (and thus real matching decisions) are common.
pub fn small_anns(max: usize) -> impl Strategy<Value = Vec<Annotation>> {
    prop::collection::vec(
        (prop::sample::select(vec!["A", "B", "C"]), prop::sample::select(vec!["x", "y", "z", " x", "x  y"])),
        0..=max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(l, s)| Annotation::new(l).with("mention", s))
            .collect()
    })
}

/// Maximum bipartite matching size by exhaustive search (inputs are tiny).
pub fn brute_force_max_matching<G, P>(gold: &[G], pred: &[P], matches: impl Fn(&G, &P) -> bool + Copy) -> usize {
    fn go<G, P>(gi: usize, used: u64, gold: &[G], pred: &[P], m: &impl Fn(&G, &P) -> bool) -> usize {
        if gi == gold.len() {
            return 0;
        }
        let mut best = go(gi + 1, used, gold, pred, m);
        for (pi, p) in pred.iter().enumerate() {
            if used & (1 << pi) == 0 && m(&gold[gi], p) {
                best = best.max(1 + go(gi + 1, used | (1 << pi), gold, pred, m));
            }
        }
        best
    }
    go(0, 0, gold, pred, &matches)
}

pub mod checks {
    use std::collections::BTreeMap;

    use iecode::codegen::render_result_block;
    use iecode::outparse::{parse_result, ParseStatus};
    use iecode::regularize::{self, RegularizationConfig};
    use iecode::schema::{Annotation, TaskSchema};
    use iecode::score::{greedy_pairs, MatchPolicy, Scorer};
    use proptest::prelude::*;

    use super::brute_force_max_matching;

    pub fn round_trip(schema: &TaskSchema, gold: &[Annotation]) -> Result<(), TestCaseError> {
        let block = render_result_block(gold, schema).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let out = parse_result(&block, schema);
        prop_assert_eq!(out.status, ParseStatus::Ok, "{}", block);
        prop_assert_eq!(out.hallucinations + out.filtered_fields + out.validation_drops, 0);
        prop_assert_eq!(&out.annotations, &gold.to_vec(), "{}", block);
        Ok(())
    }

    fn cfg(seed: u64, dropout_p: f64, mask_prob: f64) -> RegularizationConfig {
        RegularizationConfig {
            seed,
            dropout_p,
            mask_prob,
            ..RegularizationConfig::default()
        }
    }

    /// Dropped labels leave both the schema and the gold.
    pub fn dropout(schema: &TaskSchema, gold: &[Annotation], seed: u64) -> Result<(), TestCaseError> {
        let r = regularize::apply(schema, gold, &cfg(seed, 0.4, 0.0)).unwrap();
        prop_assert!(!r.schema.labels.is_empty());
        for l in &r.schema.labels {
            prop_assert!(!r.trace.dropped.contains(&l.name));
        }
        for a in &r.gold {
            prop_assert!(!r.trace.dropped.contains(&a.label));
        }
        let kept: Vec<&Annotation> = gold.iter().filter(|a| !r.trace.dropped.contains(&a.label)).collect();
        prop_assert_eq!(r.gold.iter().collect::<Vec<_>>(), kept);
        prop_assert_eq!(r.schema.labels.len() + r.trace.dropped.len(), schema.labels.len());
        Ok(())
    }

    /// Without dropout the output holds the same labels, only reordered.
    pub fn shuffle(schema: &TaskSchema, seed: u64) -> Result<(), TestCaseError> {
        let r = regularize::apply(schema, &[], &cfg(seed, 0.0, 0.0)).unwrap();
        let mut before: Vec<&str> = schema.labels.iter().map(|l| l.name.as_str()).collect();
        let mut after: Vec<&str> = r.schema.labels.iter().map(|l| l.name.as_str()).collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
        for l in &r.schema.labels {
            let orig = schema.label(&l.name).unwrap();
            prop_assert_eq!(&l.fields, &orig.fields);
            prop_assert_eq!(&l.guideline, &orig.guideline);
        }
        Ok(())
    }

    /// `min(k, |pool|)` distinct members of each pool, default `k = 5`.
    pub fn candidates(schema: &TaskSchema, seed: u64) -> Result<(), TestCaseError> {
        let c = cfg(seed, 0.0, 0.0);
        prop_assert_eq!(c.candidates_k, Some(5));
        let r = regularize::apply(schema, &[], &c).unwrap();
        for l in &r.schema.labels {
            let pool = &schema.label(&l.name).unwrap().candidates;
            prop_assert_eq!(l.candidates.len(), pool.len().min(5));
            let mut seen = l.candidates.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), l.candidates.len());
            prop_assert!(l.candidates.iter().all(|c| pool.contains(c)));
        }
        // The nominal setting: pools of ten, five drawn.
        let mut ten = schema.clone();
        for l in &mut ten.labels {
            l.candidates = (0..10).map(|i| format!("{}-{i}", l.name)).collect();
        }
        let r = regularize::apply(&ten, &[], &c).unwrap();
        for l in &r.schema.labels {
            prop_assert_eq!(l.candidates.len(), 5);
            let picks = &r.trace.chosen_candidates[&l.name];
            prop_assert!(picks.windows(2).all(|w| w[0] < w[1]) && picks.iter().all(|&i| i < 10));
        }
        Ok(())
    }

    /// Masking then unmasking gives back the (post-dropout) gold.
    pub fn mask_unmask(schema: &TaskSchema, gold: &[Annotation], seed: u64) -> Result<(), TestCaseError> {
        let r = regularize::apply(schema, gold, &cfg(seed, 0.2, 1.0)).unwrap();
        prop_assert!(r.trace.is_masked());
        for (pos, l) in r.schema.labels.iter().enumerate() {
            prop_assert_eq!(&l.name, &regularize::placeholder(pos));
        }
        let back = regularize::unmask(&r.gold, &r.trace).unwrap();
        let kept: Vec<Annotation> = gold
            .iter()
            .filter(|a| !r.trace.dropped.contains(&a.label))
            .cloned()
            .collect();
        prop_assert_eq!(&back, &kept);
        // Same seed with masking off: same stream, same result in label space.
        let plain = regularize::apply(schema, gold, &cfg(seed, 0.2, 0.0)).unwrap();
        prop_assert!(!plain.trace.is_masked());
        prop_assert_eq!(&back, &plain.gold);
        let names: Vec<&str> = plain.schema.labels.iter().map(|l| l.name.as_str()).collect();
        let inverse: Vec<String> = r
            .schema
            .labels
            .iter()
            .map(|l| r.trace.mask_map.iter().find(|(_, ph)| **ph == l.name).unwrap().0.clone())
            .collect();
        prop_assert_eq!(inverse, names);
        Ok(())
    }

    /// Same seed, byte-equal trace and output; a different seed is allowed to
    /// differ.
    pub fn seed_determinism(schema: &TaskSchema, gold: &[Annotation], seed: u64) -> Result<(), TestCaseError> {
        let c = RegularizationConfig {
            seed,
            ..RegularizationConfig::default()
        };
        let a = regularize::apply(schema, gold, &c).unwrap();
        let b = regularize::apply(schema, gold, &c).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&a.trace).unwrap(),
            serde_json::to_string(&b.trace).unwrap()
        );
        prop_assert_eq!(a.schema.to_toml_string(), b.schema.to_toml_string());
        prop_assert_eq!(a.gold, b.gold);
        prop_assert_eq!(regularize::replay(schema, &a.trace).unwrap(), a.schema);
        Ok(())
    }

    /// Greedy true positives equal the maximum matching size.
    pub fn greedy_is_maximum(gold: &[Annotation], pred: &[Annotation]) -> Result<(), TestCaseError> {
        for policy in [MatchPolicy::ExactSpan, MatchPolicy::CategoryOnly] {
            let scorer = Scorer::new(policy, Some(iecode::schema::TaskKind::Ee)).unwrap();
            let exact = policy == MatchPolicy::ExactSpan;
            let m = move |g: &Annotation, p: &Annotation| {
                fn words(a: &Annotation) -> Option<Vec<&str>> {
                    a.get("mention")
                        .and_then(|v| v.as_text())
                        .map(|s| s.split_whitespace().collect())
                }
                g.label == p.label && (!exact || words(g) == words(p))
            };
            let oracle = brute_force_max_matching(gold, pred, m);
            let report = scorer.score(gold, pred);
            prop_assert_eq!(report.total().tp, oracle, "{:?}", policy);
            prop_assert_eq!(greedy_pairs(gold, pred, |g, p| scorer.annotations_match(g, p)).len(), oracle);
            prop_assert_eq!(report.total().fp, pred.len() - oracle);
            prop_assert_eq!(report.total().fn_, gold.len() - oracle);
            let mut per: BTreeMap<&str, usize> = BTreeMap::new();
            for a in gold.iter().chain(pred) {
                *per.entry(a.label.as_str()).or_default() += 1;
            }
            for (label, c) in &report.per_label {
                prop_assert_eq!(2 * c.tp + c.fp + c.fn_, per[label.as_str()]);
            }
        }
        Ok(())
    }
}
