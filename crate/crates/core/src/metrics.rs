//! Confusion matrices, per-category precision/recall/F1, macro aggregation
//! and F1 gains.
//!
//! Conventions: a ratio with a zero denominator scores `zero_division`
//! (0 by default), F1 is 0 when precision + recall is 0, and the macro
//! average skips categories with no true observations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i][j]`: records truly in category `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    categories: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(categories: Vec<String>) -> Self {
        let k = categories.len();
        ConfusionMatrix {
            categories,
            counts: vec![vec![0; k]; k],
        }
    }

    /// Build directly from a count matrix.
    pub fn from_counts(categories: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = categories.len();
        if counts.len() != k {
            return Err(Error::LengthMismatch(counts.len(), k));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::LengthMismatch(row.len(), k));
        }
        Ok(ConfusionMatrix { categories, counts })
    }

    /// Tally index-coded labels; indices must be `< k`.
    pub fn from_indices(categories: Vec<String>, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(truth.len(), pred.len()));
        }
        let mut cm = ConfusionMatrix::zeros(categories);
        let k = cm.categories.len();
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::UnknownLabel(format!("#{}", t.max(p))));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

pub fn confusion<T: AsRef<str>, P: AsRef<str>>(
    truth: &[T],
    pred: &[P],
    categories: &[String],
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let index: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let lookup = |label: &str| -> Result<usize> {
        index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    };
    let mut cm = ConfusionMatrix::zeros(categories.to_vec());
    for (t, p) in truth.iter().zip(pred) {
        let (i, j) = (lookup(t.as_ref())?, lookup(p.as_ref())?);
        cm.counts[i][j] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConventions {
    /// Score assigned to precision or recall when its denominator is zero.
    pub zero_division: f64,
    /// Leave categories with zero support out of the macro average.
    pub exclude_zero_support: bool,
}

impl Default for MetricConventions {
    fn default() -> Self {
        MetricConventions {
            zero_division: 0.0,
            exclude_zero_support: true,
        }
    }
}

/// How per-category F1 scores are combined into one number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean over categories.
    #[default]
    Macro,
    /// Mean weighted by support.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub per_category: Vec<CategoryScore>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

impl ScoreTable {
    pub fn f1(&self, averaging: Averaging) -> f64 {
        match averaging {
            Averaging::Macro => self.macro_f1,
            Averaging::Weighted => self.weighted_f1,
        }
    }

    pub fn category(&self, name: &str) -> Option<&CategoryScore> {
        self.per_category.iter().find(|c| c.category == name)
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> ScoreTable {
    precision_recall_f1_with(cm, &MetricConventions::default())
}

pub fn precision_recall_f1_with(cm: &ConfusionMatrix, conv: &MetricConventions) -> ScoreTable {
    let ratio = |num: u64, den: u64| if den == 0 { conv.zero_division } else { num as f64 / den as f64 };
    let per_category: Vec<CategoryScore> = cm
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let hits = cm.counts[i][i];
            let support = cm.row_sum(i);
            let precision = ratio(hits, cm.col_sum(i));
            let recall = ratio(hits, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            CategoryScore {
                category: c.clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();

    let counted: Vec<&CategoryScore> = per_category
        .iter()
        .filter(|s| !conv.exclude_zero_support || s.support > 0)
        .collect();
    let macro_f1 = if counted.is_empty() {
        0.0
    } else {
        counted.iter().map(|s| s.f1).sum::<f64>() / counted.len() as f64
    };
    let total: u64 = per_category.iter().map(|s| s.support).sum();
    let weighted_f1 = if total == 0 {
        0.0
    } else {
        per_category.iter().map(|s| s.f1 * s.support as f64).sum::<f64>() / total as f64
    };
    ScoreTable {
        per_category,
        macro_f1,
        weighted_f1,
    }
}

/// Sorted union of `extra` and every label seen in `truth` or `pred`.
pub fn label_union<T: AsRef<str>, P: AsRef<str>>(truth: &[T], pred: &[P], extra: &[String]) -> Vec<String> {
    let mut all: Vec<String> = extra
        .iter()
        .cloned()
        .chain(truth.iter().map(|t| t.as_ref().to_string()))
        .chain(pred.iter().map(|p| p.as_ref().to_string()))
        .collect();
    all.sort();
    all.dedup();
    all
}

/// Scores labels over the union of `extra` and the observed labels.
pub fn score_labels<T: AsRef<str>, P: AsRef<str>>(
    truth: &[T],
    pred: &[P],
    extra: &[String],
    conv: &MetricConventions,
) -> Result<ScoreTable> {
    let cats = label_union(truth, pred, extra);
    Ok(precision_recall_f1_with(&confusion(truth, pred, &cats)?, conv))
}

/// Macro-F1 of index-coded predictions with default conventions.
pub fn macro_f1_indices(k: usize, truth: &[usize], pred: &[usize]) -> f64 {
    let cats = (0..k).map(|i| i.to_string()).collect();
    ConfusionMatrix::from_indices(cats, truth, pred)
        .map(|cm| precision_recall_f1(&cm).macro_f1)
        .unwrap_or(0.0)
}

/// Difference in macro-F1 points (0-100 scale).
pub fn gain(candidate: &ScoreTable, baseline: &ScoreTable) -> f64 {
    100.0 * (candidate.macro_f1 - baseline.macro_f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn summarize_gains(gains: &[f64]) -> Option<GainSummary> {
    if gains.is_empty() {
        return None;
    }
    Some(GainSummary {
        n: gains.len(),
        min: gains.iter().copied().fold(f64::INFINITY, f64::min),
        max: gains.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: gains.iter().sum::<f64>() / gains.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cats(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identity_predictions() {
        let cm = confusion(&["A", "B"], &["A", "B"], &cats(&["A", "B"])).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0], vec![0, 1]]);
        let t = precision_recall_f1(&cm);
        assert!(t.per_category.iter().all(|s| s.precision == 1.0 && s.recall == 1.0 && s.f1 == 1.0));
        assert_eq!(t.macro_f1, 1.0);
    }

    #[test]
    fn worked_two_by_two() {
        let mut truth = vec!["A"; 10];
        truth.extend(vec!["B"; 10]);
        let mut pred = vec!["A"; 5];
        pred.extend(vec!["B"; 15]);
        let cm = confusion(&truth, &pred, &cats(&["A", "B"])).unwrap();
        assert_eq!(cm.counts(), &[vec![5, 5], vec![0, 10]]);
        let t = precision_recall_f1(&cm);
        // hand computation: pA=5/5, pB=10/15, rA=5/10, rB=10/10
        assert_eq!(t.per_category[0].precision, 1.0);
        assert!((t.per_category[1].precision - 10.0 / 15.0).abs() < 1e-15);
        assert_eq!(t.per_category[0].recall, 0.5);
        assert_eq!(t.per_category[1].recall, 1.0);
        assert!((t.per_category[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.per_category[1].f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_on_balanced_pair() {
        let cm = confusion(&["A", "B", "A", "B"], &["A"; 4], &cats(&["A", "B"])).unwrap();
        // A: p=1/2 r=1 f1=2/3; B: p=0/0->0 r=0 f1=0
        assert!((precision_recall_f1(&cm).macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_label_is_an_error() {
        assert!(matches!(
            confusion(&["A"], &["Z"], &cats(&["A", "B"])),
            Err(Error::UnknownLabel(ref l)) if l == "Z"
        ));
        assert!(matches!(confusion(&["A"], &[] as &[&str], &cats(&["A"])), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn zero_division_convention_is_configurable() {
        let cm = confusion(&["A", "B"], &["A", "A"], &cats(&["A", "B"])).unwrap();
        let ones = MetricConventions {
            zero_division: 1.0,
            exclude_zero_support: true,
        };
        // B: precision 0/0 -> 1, recall 0/1 = 0
        assert_eq!(precision_recall_f1_with(&cm, &ones).per_category[1].precision, 1.0);
        assert_eq!(precision_recall_f1(&cm).per_category[1].precision, 0.0);
    }

    #[test]
    fn gains_in_points() {
        let t = |m: f64| ScoreTable {
            per_category: vec![],
            macro_f1: m,
            weighted_f1: m,
        };
        assert_eq!(gain(&t(0.4), &t(0.4)), 0.0);
        assert!((gain(&t(0.50), &t(0.35)) - 15.0).abs() < 1e-9);
        assert!(summarize_gains(&[]).is_none());
        let s = summarize_gains(&[1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.n, s.min, s.max, s.mean), (3, 1.0, 3.0, 2.0));
    }

    /// Per-record counting, independent of the matrix.
    fn naive_scores(k: usize, truth: &[usize], pred: &[usize]) -> Vec<(f64, f64, f64)> {
        (0..k)
            .map(|c| {
                let mut hits = 0;
                let mut predicted = 0;
                let mut actual = 0;
                for (&t, &p) in truth.iter().zip(pred) {
                    if p == c {
                        predicted += 1;
                    }
                    if t == c {
                        actual += 1;
                        if p == c {
                            hits += 1;
                        }
                    }
                }
                let p = if predicted == 0 { 0.0 } else { hits as f64 / predicted as f64 };
                let r = if actual == 0 { 0.0 } else { hits as f64 / actual as f64 };
                let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                (p, r, f)
            })
            .collect()
    }

    fn labelled(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        prop::collection::vec((0..k, 0..k), 0..50).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn matches_naive_counting((k, (truth, pred)) in (1usize..=6).prop_flat_map(|k| (Just(k), labelled(k)))) {
            let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
            let cm = ConfusionMatrix::from_indices(names, &truth, &pred).unwrap();
            prop_assert_eq!(cm.total() as usize, truth.len());
            let table = precision_recall_f1(&cm);
            for (s, (p, r, f)) in table.per_category.iter().zip(naive_scores(k, &truth, &pred)) {
                prop_assert_eq!(s.precision, p);
                prop_assert_eq!(s.recall, r);
                prop_assert_eq!(s.f1, f);
            }
        }

        #[test]
        fn macro_f1_ignores_category_order_and_empty_categories(
            (k, (truth, pred)) in (2usize..=6).prop_flat_map(|k| (Just(k), labelled(k))),
            shift in 0usize..6,
        ) {
            let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
            let base = precision_recall_f1(&ConfusionMatrix::from_indices(names.clone(), &truth, &pred).unwrap());

            let perm = |i: usize| (i + shift) % k;
            let permuted_names: Vec<String> = (0..k).map(|j| names[(j + k - shift % k) % k].clone()).collect();
            let t2: Vec<usize> = truth.iter().map(|&i| perm(i)).collect();
            let p2: Vec<usize> = pred.iter().map(|&i| perm(i)).collect();
            let permuted = precision_recall_f1(&ConfusionMatrix::from_indices(permuted_names, &t2, &p2).unwrap());
            prop_assert!((base.macro_f1 - permuted.macro_f1).abs() < 1e-12);

            let mut extended = names.clone();
            extended.push("never".to_string());
            let ext = precision_recall_f1(&ConfusionMatrix::from_indices(extended, &truth, &pred).unwrap());
            prop_assert_eq!(ext.macro_f1, base.macro_f1);
        }

        #[test]
        fn tallies_ignore_record_order(mut pairs in prop::collection::vec((0usize..4, 0usize..4), 0..40)) {
            let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let a = ConfusionMatrix::from_indices(names.clone(), &t, &p).unwrap();
            pairs.reverse();
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            prop_assert_eq!(a, ConfusionMatrix::from_indices(names, &t, &p).unwrap());
        }
    }
}
