//! Span-level micro precision/recall/F1.
//!
//! Matching is greedy and one-to-one: predictions are visited in document
//! order and each takes the first still-unmatched gold annotation it matches.
//! Labels must always be equal; the [`MatchPolicy`] decides how spans compare.
//! Corpus scores are sums of per-document [`Counts`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Annotation, TaskKind, TaskSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    ExactSpan,
    /// Label only; spans are ignored. Event tasks only.
    CategoryOnly,
    PartialSpan,
}

impl FromStr for MatchPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" | "exact_span" => Ok(MatchPolicy::ExactSpan),
            "category" | "category_only" => Ok(MatchPolicy::CategoryOnly),
            "partial" | "partial_span" => Ok(MatchPolicy::PartialSpan),
            _ => Err(format!("unknown match policy `{s}` (exact, category, partial)")),
        }
    }
}

/// How [`MatchPolicy::PartialSpan`] compares two normalized spans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartialCriterion {
    /// Either span is a substring of the other.
    #[default]
    Substring,
    /// Whitespace-token Jaccard similarity at or above the threshold.
    TokenJaccard(f64),
}

impl FromStr for PartialCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "substring" {
            return Ok(PartialCriterion::Substring);
        }
        let t = s
            .strip_prefix("jaccard:")
            .ok_or_else(|| format!("unknown partial criterion `{s}` (substring, jaccard:<t>)"))?;
        let t: f64 = t.parse().map_err(|_| format!("bad jaccard threshold `{t}`"))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(format!("jaccard threshold {t} outside [0, 1]"));
        }
        Ok(PartialCriterion::TokenJaccard(t))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("category-only matching requires an event task, got {0}")]
    PolicyMismatch(TaskKind),
    #[error("labels in both seen and unseen sets: {0:?}")]
    OverlappingPartition(Vec<String>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, computed as `2tp / (2tp + fp + fn)`; 0 when undefined.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Micro {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_label: BTreeMap<String, Counts>,
}

impl ScoreReport {
    pub fn total(&self) -> Counts {
        self.per_label.values().fold(Counts::default(), |a, &b| a + b)
    }

    pub fn micro(&self) -> Micro {
        let t = self.total();
        Micro {
            precision: t.precision(),
            recall: t.recall(),
            f1: t.f1(),
        }
    }

    fn entry(&mut self, label: &str) -> &mut Counts {
        self.per_label.entry(label.to_string()).or_default()
    }

    /// Plain-text table, one row per label plus a micro row.
    pub fn table(&self) -> String {
        let width = self
            .per_label
            .keys()
            .map(|k| k.chars().count())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut out = format!(
            "{:<width$}  {:>6} {:>6} {:>6}  {:>7} {:>7} {:>7}\n",
            "label", "tp", "fp", "fn", "P", "R", "F1"
        );
        let mut row = |name: &str, c: &Counts| {
            out.push_str(&format!(
                "{:<width$}  {:>6} {:>6} {:>6}  {:>7.4} {:>7.4} {:>7.4}\n",
                name,
                c.tp,
                c.fp,
                c.fn_,
                c.precision(),
                c.recall(),
                c.f1()
            ));
        };
        for (label, c) in &self.per_label {
            row(label, c);
        }
        row("micro", &self.total());
        out
    }
}

impl Add for ScoreReport {
    type Output = ScoreReport;

    fn add(mut self, o: ScoreReport) -> ScoreReport {
        self += o;
        self
    }
}

impl AddAssign for ScoreReport {
    fn add_assign(&mut self, o: ScoreReport) {
        for (label, c) in o.per_label {
            *self.entry(&label) += c;
        }
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

/// Strips outer whitespace and collapses inner runs to one space.
pub fn normalize_span(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<&str> = a.split_whitespace().collect();
    let b: BTreeSet<&str> = b.split_whitespace().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Compares two already-normalized strings under a policy.
pub fn strings_match(policy: MatchPolicy, partial: PartialCriterion, gold: &str, pred: &str) -> bool {
    match policy {
        MatchPolicy::CategoryOnly => true,
        MatchPolicy::ExactSpan => gold == pred,
        MatchPolicy::PartialSpan => match partial {
            PartialCriterion::Substring => gold.contains(pred) || pred.contains(gold),
            PartialCriterion::TokenJaccard(t) => jaccard(gold, pred) >= t,
        },
    }
}

/// Greedy one-to-one assignment; returns `(pred index, gold index)` pairs.
pub fn greedy_pairs<G, P>(gold: &[G], pred: &[P], mut matches: impl FnMut(&G, &P) -> bool) -> Vec<(usize, usize)> {
    let mut used = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        if let Some(gi) = (0..gold.len()).find(|&gi| !used[gi] && matches(&gold[gi], p)) {
            used[gi] = true;
            pairs.push((pi, gi));
        }
    }
    pairs
}

#[derive(Debug, Clone)]
pub struct Scorer {
    pub policy: MatchPolicy,
    pub partial: PartialCriterion,
    /// Policy for event arguments in [`Scorer::score_arguments`].
    pub argument_policy: MatchPolicy,
    span_fields: HashMap<String, String>,
}

impl Scorer {
    /// `kind` gates category-only matching; pass `None` when the task is unknown.
    pub fn new(policy: MatchPolicy, kind: Option<TaskKind>) -> Result<Self, ScoreError> {
        if let (MatchPolicy::CategoryOnly, Some(k)) = (policy, kind) {
            if !k.is_event() {
                return Err(ScoreError::PolicyMismatch(k));
            }
        }
        Ok(Scorer {
            policy,
            partial: PartialCriterion::Substring,
            argument_policy: MatchPolicy::PartialSpan,
            span_fields: HashMap::new(),
        })
    }

    pub fn for_schema(policy: MatchPolicy, schema: &TaskSchema) -> Result<Self, ScoreError> {
        let mut s = Scorer::new(policy, Some(schema.kind))?;
        s.span_fields = schema
            .labels
            .iter()
            .filter_map(|l| Some((l.name.clone(), l.span_field()?.name.clone())))
            .collect();
        Ok(s)
    }

    pub fn with_partial(mut self, partial: PartialCriterion) -> Self {
        self.partial = partial;
        self
    }

    fn span_key<'a>(&self, a: &'a Annotation) -> Option<&'a str> {
        match self.span_fields.get(&a.label) {
            Some(f) => a.get(f).and_then(|v| v.as_text()),
            None => a.span_guess(),
        }
    }

    pub fn annotations_match(&self, gold: &Annotation, pred: &Annotation) -> bool {
        if gold.label != pred.label {
            return false;
        }
        if self.policy == MatchPolicy::CategoryOnly {
            return true;
        }
        let g = normalize_span(self.span_key(gold).unwrap_or(""));
        let p = normalize_span(self.span_key(pred).unwrap_or(""));
        strings_match(self.policy, self.partial, &g, &p)
    }

    /// Scores one document.
    pub fn score(&self, gold: &[Annotation], pred: &[Annotation]) -> ScoreReport {
        let pairs = greedy_pairs(gold, pred, |g, p| self.annotations_match(g, p));
        let mut report = ScoreReport::default();
        let mut gold_hit = vec![false; gold.len()];
        let mut pred_hit = vec![false; pred.len()];
        for &(pi, gi) in &pairs {
            pred_hit[pi] = true;
            gold_hit[gi] = true;
            report.entry(&gold[gi].label).tp += 1;
        }
        for (p, hit) in pred.iter().zip(&pred_hit) {
            if !hit {
                report.entry(&p.label).fp += 1;
            }
        }
        for (g, hit) in gold.iter().zip(&gold_hit) {
            if !hit {
                report.entry(&g.label).fn_ += 1;
            }
        }
        report
    }

    /// Event argument scoring. Events are paired one-to-one under the trigger
    /// policy; within each pair, role values are matched under
    /// `argument_policy`. Arguments of unpaired events are all misses. Report
    /// keys are `Event.role`.
    pub fn score_arguments(&self, gold: &[Annotation], pred: &[Annotation]) -> ScoreReport {
        let pairs = greedy_pairs(gold, pred, |g, p| self.annotations_match(g, p));
        let mut report = ScoreReport::default();
        let mut gold_hit = vec![false; gold.len()];
        let mut pred_hit = vec![false; pred.len()];
        for &(pi, gi) in &pairs {
            pred_hit[pi] = true;
            gold_hit[gi] = true;
            let (g, p) = (&gold[gi], &pred[pi]);
            let roles: BTreeSet<&String> = g.values.keys().chain(p.values.keys()).collect();
            for role in roles {
                if self.is_span_field(&g.label, role) {
                    continue;
                }
                let gv: Vec<String> = g.get(role).map(|v| v.texts()).unwrap_or_default().into_iter().map(normalize_span).collect();
                let pv: Vec<String> = p.get(role).map(|v| v.texts()).unwrap_or_default().into_iter().map(normalize_span).collect();
                let hits = greedy_pairs(&gv, &pv, |a, b| strings_match(self.argument_policy, self.partial, a, b)).len();
                let c = report.entry(&format!("{}.{}", g.label, role));
                c.tp += hits;
                c.fp += pv.len() - hits;
                c.fn_ += gv.len() - hits;
            }
        }
        let mut unpaired = |a: &Annotation, is_gold: bool| {
            for (role, v) in &a.values {
                if self.is_span_field(&a.label, role) {
                    continue;
                }
                let n = v.texts().len();
                let c = report.entry(&format!("{}.{}", a.label, role));
                if is_gold {
                    c.fn_ += n;
                } else {
                    c.fp += n;
                }
            }
        };
        for (g, hit) in gold.iter().zip(&gold_hit) {
            if !hit {
                unpaired(g, true);
            }
        }
        for (p, hit) in pred.iter().zip(&pred_hit) {
            if !hit {
                unpaired(p, false);
            }
        }
        report
    }

    fn is_span_field(&self, label: &str, field: &str) -> bool {
        match self.span_fields.get(label) {
            Some(f) => f == field,
            None => field == "span" || field == "mention",
        }
    }
}

/// Scores one document under `policy`, checking it against the task kind.
pub fn score(
    gold: &[Annotation],
    pred: &[Annotation],
    policy: MatchPolicy,
    kind: Option<TaskKind>,
) -> Result<ScoreReport, ScoreError> {
    Ok(Scorer::new(policy, kind)?.score(gold, pred))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPartition {
    #[serde(default)]
    pub seen: BTreeSet<String>,
    #[serde(default)]
    pub unseen: BTreeSet<String>,
}

impl LabelPartition {
    pub fn new(
        seen: impl IntoIterator<Item = impl Into<String>>,
        unseen: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, ScoreError> {
        let p = LabelPartition {
            seen: seen.into_iter().map(Into::into).collect(),
            unseen: unseen.into_iter().map(Into::into).collect(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), ScoreError> {
        let both: Vec<String> = self.seen.intersection(&self.unseen).cloned().collect();
        if both.is_empty() {
            Ok(())
        } else {
            Err(ScoreError::OverlappingPartition(both))
        }
    }

    pub fn covers(&self, label: &str) -> bool {
        self.seen.contains(label) || self.unseen.contains(label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionedReport {
    pub seen: ScoreReport,
    pub unseen: ScoreReport,
    /// Predictions (and gold) whose label is in neither set.
    pub uncovered_pred: usize,
    pub uncovered_gold: usize,
}

impl AddAssign for PartitionedReport {
    fn add_assign(&mut self, o: PartitionedReport) {
        self.seen += o.seen;
        self.unseen += o.unseen;
        self.uncovered_pred += o.uncovered_pred;
        self.uncovered_gold += o.uncovered_gold;
    }
}

impl Scorer {
    pub fn score_partitioned(
        &self,
        gold: &[Annotation],
        pred: &[Annotation],
        partition: &LabelPartition,
    ) -> PartitionedReport {
        let restrict = |anns: &[Annotation], set: &BTreeSet<String>| -> Vec<Annotation> {
            anns.iter().filter(|a| set.contains(&a.label)).cloned().collect()
        };
        PartitionedReport {
            seen: self.score(&restrict(gold, &partition.seen), &restrict(pred, &partition.seen)),
            unseen: self.score(&restrict(gold, &partition.unseen), &restrict(pred, &partition.unseen)),
            uncovered_pred: pred.iter().filter(|a| !partition.covers(&a.label)).count(),
            uncovered_gold: gold.iter().filter(|a| !partition.covers(&a.label)).count(),
        }
    }
}

/// Named partitions, as stored in a partitions file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionTable {
    pub datasets: BTreeMap<String, LabelPartition>,
}

const BUILTIN_PARTITIONS: &str = include_str!("../data/partitions.toml");

impl PartitionTable {
    /// The zero-shot dataset partitions shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_PARTITIONS).expect("builtin partitions parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        let t: PartitionTable = toml::from_str(s).map_err(|e| e.to_string())?;
        for (name, p) in &t.datasets {
            p.check().map_err(|e| format!("{name}: {e}"))?;
        }
        Ok(t)
    }

    pub fn get(&self, dataset: &str) -> Option<&LabelPartition> {
        self.datasets.get(dataset)
    }
}
