//! One-vs-rest linear SVM, squared hinge, dual coordinate descent.
//!
//! Per class the primal is `0.5 |w|^2 + sum_u C * W_u * max(0, 1 - y_u w.x_u)^2`
//! with the bias folded in as a constant feature. Rows sharing a pattern and
//! label are merged into one unit whose weight `W_u` is the summed sample
//! weight, so doubling all sample weights at half the C is the same problem.

use rand::seq::SliceRandom;

use super::data::TrainingData;
use super::logistic::LinearParams;
use crate::rng;

pub(crate) const TOLERANCE: f64 = 1e-6;
pub(crate) const MAX_EPOCHS: usize = 1000;

pub(crate) fn fit(data: &TrainingData, c: f64, seed: u64) -> LinearParams {
    let units = data.units();
    let nf = data.n_features;
    let k = data.k();
    let mut coef = vec![0.0; k * nf];
    let mut intercept = vec![0.0; k];

    let diag: Vec<f64> = units.iter().map(|u| 0.5 / (c * u.weight)).collect();
    let qii: Vec<f64> = units
        .iter()
        .zip(&diag)
        .map(|(u, d)| data.active[u.pattern as usize].len() as f64 + 1.0 + d)
        .collect();

    let mut rng = rng::rng(seed);
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut alpha = vec![0.0; units.len()];

    for class in 0..k {
        let w = &mut coef[class * nf..(class + 1) * nf];
        let mut b = 0.0;
        alpha.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..MAX_EPOCHS {
            order.shuffle(&mut rng);
            let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &order {
                let u = units[i];
                let y = if u.label as usize == class { 1.0 } else { -1.0 };
                let active = &data.active[u.pattern as usize];
                let margin = b + active.iter().map(|&j| w[j as usize]).sum::<f64>();
                let g = y * margin - 1.0 + diag[i] * alpha[i];
                let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg.abs() > 1e-12 {
                    let old = alpha[i];
                    alpha[i] = (old - g / qii[i]).max(0.0);
                    let step = (alpha[i] - old) * y;
                    for &j in active {
                        w[j as usize] += step;
                    }
                    b += step;
                }
            }
            if pg_max - pg_min <= TOLERANCE {
                break;
            }
        }
        intercept[class] = b;
    }

    LinearParams {
        n_features: nf,
        coef,
        intercept,
    }
}
