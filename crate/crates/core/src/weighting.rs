//! Inverse-frequency class weights, `max(counts) / counts`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::CategoryCounts;

/// Per-category sample weights. The majority category gets exactly 1.0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(BTreeMap<String, f64>);

impl ClassWeights {
    pub fn get(&self, category: &str) -> Option<f64> {
        self.0.get(category).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weights rounded to one decimal, as printed in split-count tables.
    pub fn rounded(&self) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .map(|(k, &w)| (k.clone(), round_to(w, 1)))
            .collect()
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ClassWeights {
        ClassWeights(self.0.iter().map(|(k, &w)| (k.clone(), w * factor)).collect())
    }

    /// Weight 1.0 for each listed category.
    pub fn uniform<S: AsRef<str>>(categories: impl IntoIterator<Item = S>) -> ClassWeights {
        ClassWeights(
            categories
                .into_iter()
                .map(|c| (c.as_ref().to_string(), 1.0))
                .collect(),
        )
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for ClassWeights {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        ClassWeights(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (x * p).round() / p
}

pub fn compute_class_weights(counts: &CategoryCounts) -> Result<ClassWeights> {
    let max = counts.iter().map(|(_, n)| n).max().unwrap_or(0);
    counts
        .iter()
        .map(|(c, n)| {
            if n == 0 {
                Err(Error::ZeroCount(c.to_string()))
            } else {
                Ok((c.to_string(), max as f64 / n as f64))
            }
        })
        .collect::<Result<BTreeMap<_, _>>>()
        .map(ClassWeights)
}
