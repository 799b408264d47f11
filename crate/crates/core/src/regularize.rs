//! Seeded training-time transforms over a (schema, gold) pair.
//!
//! Five transforms, applied with a single generator in a fixed draw order:
//!
//! 1. class dropout: one unit draw per label, in declaration order;
//! 2. class order shuffling: Fisher-Yates over the surviving labels;
//! 3. guideline paraphrasing: one pick per surviving label, declaration order;
//! 4. candidate sampling: one subset per surviving label, declaration order;
//! 5. class name masking: one unit draw for the whole example.
//!
//! Draws are consumed even when a transform is disabled by its parameter value
//! (e.g. `dropout_p = 0`), so toggling one knob does not shift the stream seen
//! by later steps. Shuffling, paraphrasing and bounded candidate sampling only
//! draw when enabled.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::schema::{Annotation, TaskSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizationConfig {
    pub shuffle: bool,
    /// Per-label drop probability, in `[0, 1)`.
    pub dropout_p: f64,
    pub paraphrase: bool,
    /// Candidates kept per label; `None` keeps the whole pool.
    pub candidates_k: Option<usize>,
    /// Probability that an example has all of its class names masked.
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            shuffle: true,
            dropout_p: 0.15,
            paraphrase: false,
            candidates_k: Some(5),
            mask_prob: 0.5,
            seed: 0,
        }
    }
}

impl RegularizationConfig {
    /// Every transform off.
    pub fn identity(seed: u64) -> Self {
        RegularizationConfig {
            shuffle: false,
            dropout_p: 0.0,
            paraphrase: false,
            candidates_k: None,
            mask_prob: 0.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), RegularizeError> {
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(RegularizeError::InvalidConfig(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(RegularizeError::InvalidConfig(format!(
                "mask_prob must be in [0, 1], got {}",
                self.mask_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularizationTrace {
    pub seed: u64,
    /// Original label indices, in output order.
    pub permutation: Vec<usize>,
    pub dropped: BTreeSet<String>,
    /// Index into `[guideline, paraphrases...]`; 0 is the original guideline.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub chosen_paraphrase: BTreeMap<String, usize>,
    pub chosen_candidates: BTreeMap<String, Vec<usize>>,
    /// Original name to placeholder.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mask_map: BTreeMap<String, String>,
}

impl RegularizationTrace {
    pub fn identity(schema: &TaskSchema, seed: u64) -> Self {
        RegularizationTrace {
            seed,
            permutation: (0..schema.labels.len()).collect(),
            dropped: BTreeSet::new(),
            chosen_paraphrase: BTreeMap::new(),
            chosen_candidates: schema
                .labels
                .iter()
                .map(|l| (l.name.clone(), (0..l.candidates.len()).collect()))
                .collect(),
            mask_map: BTreeMap::new(),
        }
    }

    pub fn is_masked(&self) -> bool {
        !self.mask_map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub schema: TaskSchema,
    pub gold: Vec<Annotation>,
    pub trace: RegularizationTrace,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegularizeError {
    #[error("schema has no labels")]
    EmptySchemaAfterDropout,
    #[error("{0}: paraphrasing enabled but the label has no paraphrases")]
    MissingParaphrases(String),
    #[error("invalid regularization config: {0}")]
    InvalidConfig(String),
    #[error("{0}: not a placeholder of this example")]
    UnknownPlaceholder(String),
}

pub fn placeholder(position: usize) -> String {
    format!("LABEL_{}", position + 1)
}

fn looks_like_placeholder(label: &str) -> bool {
    label
        .strip_prefix("LABEL_")
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

pub fn apply(
    schema: &TaskSchema,
    gold: &[Annotation],
    config: &RegularizationConfig,
) -> Result<Regularized, RegularizeError> {
    config.check()?;
    if schema.labels.is_empty() {
        return Err(RegularizeError::EmptySchemaAfterDropout);
    }
    if config.paraphrase {
        if let Some(l) = schema.labels.iter().find(|l| l.paraphrases.is_empty()) {
            return Err(RegularizeError::MissingParaphrases(l.name.clone()));
        }
    }
    let mut rng = SeededRng::new(config.seed);
    let n = schema.labels.len();

    let mut keep = vec![true; n];
    for slot in keep.iter_mut() {
        if rng.unit() < config.dropout_p {
            *slot = false;
        }
    }
    if keep.iter().all(|k| !k) {
        keep[n - 1] = true;
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();

    let mut permutation = survivors.clone();
    if config.shuffle {
        rng.shuffle(&mut permutation);
    }

    let mut chosen_paraphrase = BTreeMap::new();
    if config.paraphrase {
        for &i in &survivors {
            let l = &schema.labels[i];
            chosen_paraphrase.insert(l.name.clone(), rng.below(l.paraphrases.len() + 1));
        }
    }

    let mut chosen_candidates = BTreeMap::new();
    for &i in &survivors {
        let l = &schema.labels[i];
        let pool = l.candidates.len();
        let k = config.candidates_k.map_or(pool, |k| k.min(pool));
        let mut picks = if k == pool {
            (0..pool).collect()
        } else {
            rng.sample_indices(pool, k)
        };
        picks.sort_unstable();
        chosen_candidates.insert(l.name.clone(), picks);
    }

    let mut mask_map = BTreeMap::new();
    if rng.unit() < config.mask_prob {
        for (pos, &i) in permutation.iter().enumerate() {
            mask_map.insert(schema.labels[i].name.clone(), placeholder(pos));
        }
    }

    let dropped: BTreeSet<String> = (0..n)
        .filter(|&i| !keep[i])
        .map(|i| schema.labels[i].name.clone())
        .collect();

    let gold = gold
        .iter()
        .filter(|a| !dropped.contains(&a.label))
        .map(|a| {
            let mut a = a.clone();
            if let Some(m) = mask_map.get(&a.label) {
                a.label = m.clone();
            }
            a
        })
        .collect();

    let trace = RegularizationTrace {
        seed: config.seed,
        permutation,
        dropped,
        chosen_paraphrase,
        chosen_candidates,
        mask_map,
    };
    Ok(Regularized {
        schema: replay(schema, &trace)?,
        gold,
        trace,
    })
}

/// Rebuilds the transformed schema that a trace describes.
pub fn replay(schema: &TaskSchema, trace: &RegularizationTrace) -> Result<TaskSchema, RegularizeError> {
    let labels = trace
        .permutation
        .iter()
        .map(|&i| {
            let mut l = schema
                .labels
                .get(i)
                .cloned()
                .ok_or_else(|| RegularizeError::InvalidConfig(format!("trace index {i} out of range")))?;
            if let Some(&p) = trace.chosen_paraphrase.get(&l.name) {
                if p > 0 {
                    l.guideline = l.paraphrases.get(p - 1).cloned().ok_or_else(|| {
                        RegularizeError::InvalidConfig(format!("{}: paraphrase {p} out of range", l.name))
                    })?;
                }
            }
            if let Some(picks) = trace.chosen_candidates.get(&l.name) {
                l.candidates = picks
                    .iter()
                    .map(|&c| l.candidates.get(c).cloned())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| RegularizeError::InvalidConfig(format!("{}: candidate index out of range", l.name)))?;
            }
            if let Some(m) = trace.mask_map.get(&l.name) {
                l.name = m.clone();
            }
            Ok(l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TaskSchema {
        dataset_id: schema.dataset_id.clone(),
        kind: schema.kind,
        labels,
    })
}

/// Maps placeholder labels back to the original names. Labels that are not
/// placeholders pass through unchanged.
pub fn unmask(
    annotations: &[Annotation],
    trace: &RegularizationTrace,
) -> Result<Vec<Annotation>, RegularizeError> {
    let inverse: HashMap<&str, &str> = trace
        .mask_map
        .iter()
        .map(|(orig, ph)| (ph.as_str(), orig.as_str()))
        .collect();
    annotations
        .iter()
        .map(|a| match inverse.get(a.label.as_str()) {
            Some(orig) => {
                let mut a = a.clone();
                a.label = orig.to_string();
                Ok(a)
            }
            None if looks_like_placeholder(&a.label) => {
                Err(RegularizeError::UnknownPlaceholder(a.label.clone()))
            }
            None => Ok(a.clone()),
        })
        .collect()
}
