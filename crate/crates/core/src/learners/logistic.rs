//! Multinomial logistic regression.
//!
//! Objective: `C * sum_i w_i * CE_i + 0.5 * |coef|^2`, intercepts unpenalized.

use serde::{Deserialize, Serialize};

use super::boosting::softmax_in_place;
use super::data::TrainingData;
use super::optim::Lbfgs;
use crate::error::{Error, Result};

/// A sparse real-valued row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dense(values: &[f64]) -> Self {
        SparseRow {
            indices: (0..values.len() as u32).collect(),
            values: values.to_vec(),
        }
    }

    pub fn binary(indices: &[u32]) -> Self {
        SparseRow {
            indices: indices.to_vec(),
            values: vec![1.0; indices.len()],
        }
    }
}

/// Weighted labelled rows for the linear learners.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDesign {
    pub n_features: usize,
    pub k: usize,
    pub rows: Vec<SparseRow>,
    pub labels: Vec<u32>,
    pub weights: Vec<f64>,
}

impl LinearDesign {
    pub fn new(n_features: usize, k: usize, rows: Vec<SparseRow>, labels: Vec<u32>, weights: Vec<f64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        if rows.len() != weights.len() {
            return Err(Error::LengthMismatch(rows.len(), weights.len()));
        }
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Some(r) = rows.iter().find(|r| r.indices.iter().any(|&j| j as usize >= n_features)) {
            return Err(Error::FeatureMismatch {
                expected: n_features,
                got: r.indices.iter().map(|&j| j as usize + 1).max().unwrap_or(0),
            });
        }
        if labels.iter().any(|&l| l as usize >= k) {
            return Err(Error::InvalidSpec(format!("label index out of range for {k} categories")));
        }
        Ok(LinearDesign {
            n_features,
            k,
            rows,
            labels,
            weights,
        })
    }

    /// One row per (pattern, label) unit with the summed sample weight.
    pub(crate) fn from_training(data: &TrainingData) -> Self {
        let units = data.units();
        LinearDesign {
            n_features: data.n_features,
            k: data.k(),
            rows: units.iter().map(|u| SparseRow::binary(&data.active[u.pattern as usize])).collect(),
            labels: units.iter().map(|u| u.label).collect(),
            weights: units.iter().map(|u| u.weight).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.k * (self.n_features + 1)
    }
}

/// Per-class coefficients (row-major, `k x n_features`) and intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub n_features: usize,
    pub coef: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl LinearParams {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }

    pub fn class_coef(&self, class: usize) -> &[f64] {
        &self.coef[class * self.n_features..(class + 1) * self.n_features]
    }

    pub fn scores_sparse(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        let nf = self.n_features;
        let mut z = self.intercept.clone();
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &self.coef[c * nf..(c + 1) * nf];
            *zc += indices.iter().zip(values).map(|(&j, v)| w[j as usize] * v).sum::<f64>();
        }
        z
    }

    pub fn scores_binary(&self, flags: &[bool]) -> Vec<f64> {
        let nf = self.n_features;
        let mut z = self.intercept.clone();
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &self.coef[c * nf..(c + 1) * nf];
            *zc += flags.iter().zip(w).filter(|(f, _)| **f).map(|(_, w)| w).sum::<f64>();
        }
        z
    }

    pub fn softmax_sparse(&self, indices: &[u32], values: &[f64]) -> Vec<f64> {
        let mut z = self.scores_sparse(indices, values);
        softmax_in_place(&mut z);
        z
    }

    fn from_flat(design: &LinearDesign, params: &[f64]) -> Self {
        let split = design.k * design.n_features;
        LinearParams {
            n_features: design.n_features,
            coef: params[..split].to_vec(),
            intercept: params[split..].to_vec(),
        }
    }
}

/// Objective value at `params` (coef then intercepts); writes the gradient.
pub fn objective_and_gradient(design: &LinearDesign, c: f64, params: &[f64], grad: &mut [f64]) -> f64 {
    let (k, nf) = (design.k, design.n_features);
    let split = k * nf;
    let (coef, intercept) = params.split_at(split);
    let mut f = 0.5 * coef.iter().map(|w| w * w).sum::<f64>();
    grad[..split].copy_from_slice(coef);
    grad[split..].iter_mut().for_each(|g| *g = 0.0);

    let mut z = vec![0.0; k];
    for ((row, &label), &w) in design.rows.iter().zip(&design.labels).zip(&design.weights) {
        for (cl, zc) in z.iter_mut().enumerate() {
            let wc = &coef[cl * nf..(cl + 1) * nf];
            *zc = intercept[cl] + row.indices.iter().zip(&row.values).map(|(&j, v)| wc[j as usize] * v).sum::<f64>();
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        f += c * w * (lse - z[label as usize]);
        for cl in 0..k {
            let r = c * w * ((z[cl] - lse).exp() - if cl == label as usize { 1.0 } else { 0.0 });
            if r != 0.0 {
                let gc = &mut grad[cl * nf..(cl + 1) * nf];
                for (&j, v) in row.indices.iter().zip(&row.values) {
                    gc[j as usize] += r * v;
                }
                grad[split + cl] += r;
            }
        }
    }
    f
}

pub fn fit_softmax(design: &LinearDesign, c: f64) -> LinearParams {
    let x = Lbfgs::default().minimize(vec![0.0; design.n_params()], |p, g| objective_and_gradient(design, c, p, g));
    LinearParams::from_flat(design, &x)
}
