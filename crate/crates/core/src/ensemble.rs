//! Stacking of a generic and a specific model.
//!
//! The meta-model is a multinomial logistic regression (C = 0.2, no class
//! weights) on `a * generic(x) + b * zero_pad(specific(x))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::logistic::{fit_softmax, LinearDesign, LinearParams, SparseRow};
use crate::learners::{argmax, ProbabilisticForecast, TrainedModel};
use crate::metrics::{score_labels, MetricConventions};
use crate::records::{AccidentRecord, AttributeVector, OutcomeKind, RecordPool};
use crate::splitting::SplitSet;

pub const META_C: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendCoefficients {
    /// Weight on the generic forecast.
    pub a: f64,
    /// Weight on the specific forecast.
    pub b: f64,
}

/// The 19 searched pairs: (0.1,1) .. (1,1), then (1,0.1) .. (1,0.9).
pub fn blend_pairs() -> Vec<BlendCoefficients> {
    let tenth = |i: u32| i as f64 / 10.0;
    (1..=10)
        .map(|i| BlendCoefficients { a: tenth(i), b: 1.0 })
        .chain((1..=9).map(|i| BlendCoefficients { a: 1.0, b: tenth(i) }))
        .collect()
}

/// Copies `f` into `target` order with zeros for missing categories.
pub fn zero_pad(f: &ProbabilisticForecast, target: &[String]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; target.len()];
    for (c, &p) in f.categories.iter().zip(&f.probs) {
        let i = target
            .iter()
            .position(|t| t == c)
            .ok_or_else(|| Error::CategoryNotInTarget(c.clone()))?;
        out[i] = p;
    }
    Ok(out)
}

pub fn blend(a: f64, b: f64, generic: &[f64], specific: &[f64]) -> Result<Vec<f64>> {
    if generic.len() != specific.len() {
        return Err(Error::LengthMismatch(generic.len(), specific.len()));
    }
    Ok(generic.iter().zip(specific).map(|(g, s)| a * g + b * s).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    /// Output categories: the labels seen when fitting.
    pub categories: Vec<String>,
    pub params: LinearParams,
}

impl MetaModel {
    pub fn predict_proba(&self, input: &[f64]) -> Vec<f64> {
        let idx: Vec<u32> = (0..input.len() as u32).collect();
        self.params.softmax_sparse(&idx, input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub generic: TrainedModel,
    pub specific: TrainedModel,
    pub coefficients: BlendCoefficients,
    pub meta: MetaModel,
}

/// Base forecasts on the generic category list, before blending.
struct BaseForecasts {
    generic: Vec<Vec<f64>>,
    specific: Vec<Vec<f64>>,
}

fn base_forecasts(generic: &TrainedModel, specific: &TrainedModel, records: &[&AccidentRecord]) -> Result<BaseForecasts> {
    let mut out = BaseForecasts {
        generic: Vec::with_capacity(records.len()),
        specific: Vec::with_capacity(records.len()),
    };
    for r in records {
        out.generic.push(generic.predict_proba(&r.attributes)?);
        out.specific.push(zero_pad(&specific.predict_distribution(&r.attributes)?, &generic.categories)?);
    }
    Ok(out)
}

fn check_stackable(generic: &TrainedModel, specific: &TrainedModel) -> Result<()> {
    if !generic.is_probabilistic() || !specific.is_probabilistic() {
        return Err(Error::SvmNotStackable);
    }
    for c in &specific.categories {
        if !generic.categories.contains(c) {
            return Err(Error::CategoryNotInTarget(c.clone()));
        }
    }
    Ok(())
}

fn fit_meta(inputs: &[Vec<f64>], labels: &[&str]) -> Result<MetaModel> {
    let mut categories: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    categories.sort();
    categories.dedup();
    if categories.len() < 2 {
        return Err(Error::SingleCategory);
    }
    let label_idx: Vec<u32> = labels
        .iter()
        .map(|l| categories.iter().position(|c| c == l).unwrap() as u32)
        .collect();
    let n_features = inputs.first().map_or(0, Vec::len);
    let design = LinearDesign::new(
        n_features,
        categories.len(),
        inputs.iter().map(|x| SparseRow::dense(x)).collect(),
        label_idx,
        vec![1.0; labels.len()],
    )?;
    Ok(MetaModel {
        categories,
        params: fit_softmax(&design, META_C),
    })
}

#[derive(Debug, Clone)]
pub struct StackerFit {
    pub model: StackedModel,
    /// Validation macro-F1 of every pair, in search order.
    pub pair_scores: Vec<(BlendCoefficients, f64)>,
}

/// Fits a meta-model per coefficient pair on `validation` and keeps the best
/// by macro-F1; ties go to the earliest pair.
pub fn fit_stacker_on(
    generic: &TrainedModel,
    specific: &TrainedModel,
    validation: &[&AccidentRecord],
    outcome: OutcomeKind,
    conv: &MetricConventions,
) -> Result<StackerFit> {
    check_stackable(generic, specific)?;
    let validation: Vec<&AccidentRecord> = validation.iter().copied().filter(|r| r.label(outcome).is_some()).collect();
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let truth: Vec<&str> = validation.iter().map(|r| r.label(outcome).unwrap()).collect();
    let base = base_forecasts(generic, specific, &validation)?;

    let mut pair_scores = Vec::with_capacity(19);
    let mut best: Option<(BlendCoefficients, MetaModel, f64)> = None;
    for pair in blend_pairs() {
        let inputs: Vec<Vec<f64>> = base
            .generic
            .iter()
            .zip(&base.specific)
            .map(|(g, s)| blend(pair.a, pair.b, g, s))
            .collect::<Result<_>>()?;
        let meta = fit_meta(&inputs, &truth)?;
        let pred: Vec<&str> = inputs
            .iter()
            .map(|x| meta.categories[argmax(&meta.predict_proba(x))].as_str())
            .collect();
        let score = score_labels(&truth, &pred, &meta.categories, conv)?.macro_f1;
        pair_scores.push((pair, score));
        if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
            best = Some((pair, meta, score));
        }
    }
    let (coefficients, meta, _) = best.expect("19 pairs");
    Ok(StackerFit {
        model: StackedModel {
            generic: generic.clone(),
            specific: specific.clone(),
            coefficients,
            meta,
        },
        pair_scores,
    })
}

/// `fit_stacker_on` with the validation part of `split`.
pub fn fit_stacker(
    generic: &TrainedModel,
    specific: &TrainedModel,
    pool: &RecordPool,
    split: &SplitSet,
    conv: &MetricConventions,
) -> Result<StackerFit> {
    let validation: Vec<&AccidentRecord> = pool.resolve(&split.validation).collect();
    fit_stacker_on(generic, specific, &validation, split.key.outcome, conv)
}

impl StackedModel {
    /// Swaps in new base models with the same category lists.
    pub fn with_bases(&self, generic: TrainedModel, specific: TrainedModel) -> Result<StackedModel> {
        check_stackable(&generic, &specific)?;
        if generic.categories != self.generic.categories || specific.categories != self.specific.categories {
            return Err(Error::LengthMismatch(generic.categories.len(), self.generic.categories.len()));
        }
        Ok(StackedModel {
            generic,
            specific,
            coefficients: self.coefficients,
            meta: self.meta.clone(),
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.meta.categories
    }

    pub fn meta_input(&self, x: &AttributeVector) -> Result<Vec<f64>> {
        let g = self.generic.predict_proba(x)?;
        let s = zero_pad(&self.specific.predict_distribution(x)?, &self.generic.categories)?;
        blend(self.coefficients.a, self.coefficients.b, &g, &s)
    }

    pub fn predict_proba(&self, x: &AttributeVector) -> Result<Vec<f64>> {
        Ok(self.meta.predict_proba(&self.meta_input(x)?))
    }

    pub fn predict_stacked(&self, x: &AttributeVector) -> Result<ProbabilisticForecast> {
        ProbabilisticForecast::new(self.meta.categories.clone(), self.predict_proba(x)?)
    }

    pub fn predict_label(&self, x: &AttributeVector) -> Result<&str> {
        Ok(&self.meta.categories[argmax(&self.predict_proba(x)?)])
    }

    pub fn predict_labels<'a>(&self, records: impl IntoIterator<Item = &'a AccidentRecord>) -> Result<Vec<String>> {
        records
            .into_iter()
            .map(|r| self.predict_label(&r.attributes).map(str::to_string))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(cats: &[&str], probs: &[f64]) -> ProbabilisticForecast {
        ProbabilisticForecast::new(cats.iter().map(|s| s.to_string()).collect(), probs.to_vec()).unwrap()
    }

    fn t(cats: &[&str]) -> Vec<String> {
        cats.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn nineteen_pairs_in_order() {
        let p = blend_pairs();
        assert_eq!(p.len(), 19);
        assert_eq!(p[0], BlendCoefficients { a: 0.1, b: 1.0 });
        assert_eq!(p[9], BlendCoefficients { a: 1.0, b: 1.0 });
        assert_eq!(p[10], BlendCoefficients { a: 1.0, b: 0.1 });
        assert_eq!(p[18], BlendCoefficients { a: 1.0, b: 0.9 });
    }

    #[test]
    fn padding() {
        assert_eq!(zero_pad(&f(&["A", "B"], &[0.3, 0.7]), &t(&["A", "B", "C"])).unwrap(), vec![0.3, 0.7, 0.0]);
        assert_eq!(zero_pad(&f(&["C"], &[1.0]), &t(&["A", "B", "C"])).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(zero_pad(&f(&["A", "B"], &[0.4, 0.6]), &t(&["A", "B"])).unwrap(), vec![0.4, 0.6]);
        assert!(matches!(
            zero_pad(&f(&["D"], &[1.0]), &t(&["A", "B"])),
            Err(Error::CategoryNotInTarget(c)) if c == "D"
        ));
    }

    #[test]
    fn blending() {
        let v = blend(1.0, 1.0, &[0.2, 0.8], &[0.6, 0.4]).unwrap();
        assert!((v[0] - 0.8).abs() < 1e-15 && (v[1] - 1.2).abs() < 1e-15);
        assert_eq!(blend(1.0, 0.1, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0, 0.1]);
        assert!(matches!(blend(1.0, 1.0, &[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch(1, 2))));
    }
}
