//! Training matrices built from records.
//!
//! Attribute vectors are binary, so rows sharing a pattern are
//! indistinguishable to every learner here. Patterns are deduplicated once
//! and rows keep a pattern index, which lets tree builders and the linear
//! solvers work on aggregated units instead of raw rows.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::records::{AccidentRecord, AttributeVector, OutcomeKind};
use crate::weighting::ClassWeights;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Row {
    pub pattern: u32,
    pub label: u32,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct TrainingData {
    pub n_features: usize,
    pub categories: Vec<String>,
    words: usize,
    bits: Vec<u64>,
    /// Set features of each pattern, ascending.
    pub active: Vec<Vec<u32>>,
    pub rows: Vec<Row>,
}

impl TrainingData {
    pub fn from_records(
        records: &[&AccidentRecord],
        outcome: OutcomeKind,
        weights: &ClassWeights,
    ) -> Result<Self> {
        let labelled: Vec<(&AttributeVector, &str)> = records
            .iter()
            .filter_map(|r| r.label(outcome).map(|l| (&r.attributes, l)))
            .collect();
        if labelled.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let categories: Vec<String> = labelled
            .iter()
            .map(|(_, l)| *l)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let cat_weight: Vec<f64> = categories
            .iter()
            .map(|c| weights.get(c).ok_or_else(|| Error::MissingWeight(c.clone())))
            .collect::<Result<_>>()?;
        let label_index: HashMap<&str, u32> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();

        let n_features = labelled[0].0.len();
        let mut builder = PatternBuilder::new(n_features);
        let mut rows = Vec::with_capacity(labelled.len());
        for (attrs, label) in labelled {
            if attrs.len() != n_features {
                return Err(Error::FeatureMismatch {
                    expected: n_features,
                    got: attrs.len(),
                });
            }
            let label = label_index[label];
            rows.push(Row {
                pattern: builder.intern(attrs.flags()),
                label,
                weight: cat_weight[label as usize],
            });
        }
        Ok(builder.finish(categories, rows))
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    pub fn n_patterns(&self) -> usize {
        self.active.len()
    }

    #[inline]
    pub fn bit(&self, pattern: u32, feature: u32) -> bool {
        let w = self.bits[pattern as usize * self.words + (feature as usize >> 6)];
        (w >> (feature & 63)) & 1 == 1
    }

    /// Per (pattern, label) unit weights, dropping empty units.
    pub fn units(&self) -> Vec<Unit> {
        let k = self.k();
        let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
        let mut order = Vec::new();
        for r in &self.rows {
            let key = (r.pattern, r.label);
            let e = acc.entry(key).or_insert_with(|| {
                order.push(key);
                0.0
            });
            *e += r.weight;
        }
        debug_assert!(order.iter().all(|&(_, l)| (l as usize) < k));
        order
            .into_iter()
            .map(|(pattern, label)| Unit {
                pattern,
                label,
                weight: acc[&(pattern, label)],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Unit {
    pub pattern: u32,
    pub label: u32,
    pub weight: f64,
}

struct PatternBuilder {
    n_features: usize,
    words: usize,
    lookup: HashMap<Vec<u64>, u32>,
    bits: Vec<u64>,
    active: Vec<Vec<u32>>,
}

impl PatternBuilder {
    fn new(n_features: usize) -> Self {
        PatternBuilder {
            n_features,
            words: n_features.div_ceil(64).max(1),
            lookup: HashMap::new(),
            bits: Vec::new(),
            active: Vec::new(),
        }
    }

    fn intern(&mut self, flags: &[bool]) -> u32 {
        let mut key = vec![0u64; self.words];
        for (i, &f) in flags.iter().enumerate() {
            if f {
                key[i >> 6] |= 1 << (i & 63);
            }
        }
        if let Some(&id) = self.lookup.get(&key) {
            return id;
        }
        let id = self.active.len() as u32;
        self.bits.extend_from_slice(&key);
        self.active.push(
            flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| i as u32)
                .collect(),
        );
        self.lookup.insert(key, id);
        id
    }

    fn finish(self, categories: Vec<String>, rows: Vec<Row>) -> TrainingData {
        debug_assert!(self.n_features <= self.words * 64);
        TrainingData {
            n_features: self.n_features,
            categories,
            words: self.words,
            bits: self.bits,
            active: self.active,
            rows,
        }
    }
}
