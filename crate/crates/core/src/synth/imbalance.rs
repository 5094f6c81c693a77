//! Labels with lognormal category weights, and how hard they are for trivial
//! baselines as the number of categories grows.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::{Binomial, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{precision_recall_f1, Averaging, ConfusionMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    pub k: usize,
    pub n: usize,
    pub lognormal_sd: f64,
    pub seed: u64,
}

impl ImbalanceSpec {
    pub fn new(k: usize, seed: u64) -> Self {
        ImbalanceSpec {
            k,
            n: 100_000,
            lognormal_sd: 2.0,
            seed,
        }
    }
}

/// Normalized `exp(Normal(0, sd))` category weights.
pub fn draw_probabilities(spec: &ImbalanceSpec) -> Vec<f64> {
    let mut rng = rng::rng(rng::derive_str(spec.seed, "probabilities"));
    let w: Vec<f64> = if spec.lognormal_sd == 0.0 {
        vec![1.0; spec.k]
    } else {
        let dist = LogNormal::new(0.0, spec.lognormal_sd).expect("sd is finite and non-negative");
        (0..spec.k).map(|_| dist.sample(&mut rng)).collect()
    };
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Category indices drawn iid from `draw_probabilities(spec)`.
pub fn draw_imbalanced_labels(spec: &ImbalanceSpec) -> Vec<usize> {
    let probs = draw_probabilities(spec);
    let dist = WeightedIndex::new(&probs).expect("positive probabilities");
    let mut rng = rng::rng(rng::derive_str(spec.seed, "labels"));
    (0..spec.n).map(|_| dist.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Uniformly random category.
    Random,
    /// Always the modal category.
    MostFrequent,
}

/// Category counts of `spec.n` draws from `draw_probabilities(spec)`.
pub fn draw_label_counts(spec: &ImbalanceSpec) -> Vec<u64> {
    let probs = draw_probabilities(spec);
    let mut rng = rng::rng(rng::derive_str(spec.seed, "counts"));
    multinomial(spec.n as u64, &probs, &mut rng)
}

/// Sequential binomial sampling of a multinomial draw.
fn multinomial(n: u64, probs: &[f64], rng: &mut rng::Rng) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let (mut left, mut mass) = (n, 1.0);
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let x = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[i] = x;
        left -= x;
        mass -= p;
    }
    out
}

/// `1 - F1` of a trivial baseline over categories `0..k`.
pub fn baseline_difficulty(labels: &[usize], k: usize, kind: Baseline, seed: u64, averaging: Averaging) -> f64 {
    let mut support = vec![0u64; k];
    labels.iter().for_each(|&t| support[t] += 1);
    baseline_difficulty_from_counts(&support, kind, seed, averaging)
}

/// `baseline_difficulty` given only the true category counts.
pub fn baseline_difficulty_from_counts(support: &[u64], kind: Baseline, seed: u64, averaging: Averaging) -> f64 {
    let k = support.len();
    if support.iter().sum::<u64>() == 0 {
        return 0.0;
    }
    let counts: Vec<Vec<u64>> = match kind {
        Baseline::Random => {
            let mut rng = rng::rng(rng::derive_str(seed, "random-baseline"));
            let uniform = vec![1.0 / k as f64; k];
            support.iter().map(|&s| multinomial(s, &uniform, &mut rng)).collect()
        }
        Baseline::MostFrequent => {
            let mode = (0..k).fold(0, |best, i| if support[i] > support[best] { i } else { best });
            support
                .iter()
                .map(|&s| (0..k).map(|j| if j == mode { s } else { 0 }).collect())
                .collect()
        }
    };
    let cats = (0..k).map(|i| i.to_string()).collect();
    let cm = ConfusionMatrix::from_counts(cats, counts).expect("square matrix");
    1.0 - precision_recall_f1(&cm).f1(averaging)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n: usize,
    pub lognormal_sd: f64,
    /// Independent probability draws averaged per K.
    pub replicates: usize,
    pub averaging: Averaging,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            k_min: 2,
            k_max: 12,
            n: 100_000,
            lognormal_sd: 2.0,
            replicates: 400,
            averaging: Averaging::Weighted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub k: usize,
    pub random: f64,
    pub most_frequent: f64,
}

impl DifficultyRow {
    /// Mean of the two baselines.
    pub fn aggregate(&self) -> f64 {
        0.5 * (self.random + self.most_frequent)
    }
}

/// Mean baseline difficulty per K, averaged over `replicates` draws.
pub fn difficulty_curve(cfg: &CurveConfig) -> Result<Vec<DifficultyRow>> {
    if cfg.k_min < 2 || cfg.k_max < cfg.k_min {
        return Err(Error::Config(format!("bad K range {}..{}", cfg.k_min, cfg.k_max)));
    }
    if cfg.n == 0 || cfg.replicates == 0 || !(cfg.lognormal_sd >= 0.0 && cfg.lognormal_sd.is_finite()) {
        return Err(Error::Config("n and replicates must be positive, sd finite and non-negative".into()));
    }
    Ok((cfg.k_min..=cfg.k_max)
        .map(|k| {
            let (mut random, mut most_frequent) = (0.0, 0.0);
            for r in 0..cfg.replicates {
                let seed = rng::derive(rng::derive(cfg.seed, k as u64), r as u64);
                let spec = ImbalanceSpec {
                    k,
                    n: cfg.n,
                    lognormal_sd: cfg.lognormal_sd,
                    seed,
                };
                let support = draw_label_counts(&spec);
                random += baseline_difficulty_from_counts(&support, Baseline::Random, seed, cfg.averaging);
                most_frequent += baseline_difficulty_from_counts(&support, Baseline::MostFrequent, seed, cfg.averaging);
            }
            let reps = cfg.replicates as f64;
            DifficultyRow {
                k,
                random: random / reps,
                most_frequent: most_frequent / reps,
            }
        })
        .collect())
}

pub fn write_curve_to<W: Write>(writer: W, rows: &[DifficultyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "random", "most_frequent", "aggregate"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.random.to_string(),
            r.most_frequent.to_string(),
            r.aggregate().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<curve>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sd_is_uniform() {
        let p = draw_probabilities(&ImbalanceSpec {
            lognormal_sd: 0.0,
            ..ImbalanceSpec::new(4, 1)
        });
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn probabilities_sum_to_one() {
        for seed in 0..20 {
            let p = draw_probabilities(&ImbalanceSpec::new(7, seed));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn balanced_most_frequent() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let d = baseline_difficulty(&labels, 2, Baseline::MostFrequent, 0, Averaging::Macro);
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
        let single = vec![1usize; 50];
        assert_eq!(baseline_difficulty(&single, 3, Baseline::MostFrequent, 0, Averaging::Macro), 0.0);
    }

    #[test]
    fn curve_rejects_bad_ranges() {
        assert!(difficulty_curve(&CurveConfig { k_min: 1, ..Default::default() }).is_err());
        assert!(difficulty_curve(&CurveConfig { k_min: 5, k_max: 4, ..Default::default() }).is_err());
    }
}
