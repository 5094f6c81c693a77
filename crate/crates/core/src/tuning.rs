//! Hyperparameter grids, validation-set grid search and the final refit.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{
    fit, BoostingSpec, LearnerFamily, LearnerSpec, LinearSvmSpec, LogisticSpec, RandomForestSpec, TrainedModel,
};
use crate::metrics::{score_labels, MetricConventions};
use crate::records::{category_counts, AccidentRecord, OutcomeKind, RecordPool};
use crate::rng;
use crate::splitting::SplitSet;
use crate::weighting::{compute_class_weights, ClassWeights};

pub const RF_NTREE: [usize; 16] = [
    100, 200, 300, 400, 500, 600, 700, 800, 900, 1000, 1100, 1200, 1300, 1400, 1500, 1600,
];
pub const RF_MTRY: [usize; 9] = [5, 10, 15, 20, 25, 30, 35, 40, 45];
pub const RF_NODESIZE: [usize; 6] = [1, 2, 5, 10, 25, 50];
pub const XGB_MAX_DEPTH: [usize; 4] = [3, 4, 5, 6];
pub const XGB_LEARNING_RATE: [f64; 3] = [0.01, 0.05, 0.1];
pub const XGB_MIN_CHILD_WEIGHT: [f64; 4] = [1.0, 3.0, 5.0, 10.0];
pub const XGB_SUBSAMPLE: [f64; 4] = [0.3, 0.5, 0.7, 1.0];
pub const XGB_COLSAMPLE: [f64; 4] = [0.3, 0.5, 0.7, 1.0];
pub const SVM_GRID_POINTS: usize = 3000;
pub const SVM_LOG10_RANGE: (f64, f64) = (-9.0, 9.0);

/// Every spec of a family's grid, in cross-product order.
pub fn enumerate_grid(family: LearnerFamily) -> Vec<LearnerSpec> {
    match family {
        LearnerFamily::RandomForest => {
            let mut out = Vec::with_capacity(864);
            for &ntree in &RF_NTREE {
                for &mtry in &RF_MTRY {
                    for &nodesize in &RF_NODESIZE {
                        out.push(LearnerSpec::RandomForest(RandomForestSpec { ntree, mtry, nodesize }));
                    }
                }
            }
            out
        }
        LearnerFamily::Boosting => {
            let mut out = Vec::with_capacity(768);
            for &d in &XGB_MAX_DEPTH {
                for &lr in &XGB_LEARNING_RATE {
                    for &mcw in &XGB_MIN_CHILD_WEIGHT {
                        for &ss in &XGB_SUBSAMPLE {
                            for &cs in &XGB_COLSAMPLE {
                                out.push(LearnerSpec::Boosting(BoostingSpec::new(d, lr, mcw, ss, cs)));
                            }
                        }
                    }
                }
            }
            out
        }
        LearnerFamily::LinearSvm => {
            let (lo, hi) = SVM_LOG10_RANGE;
            let step = (hi - lo) / (SVM_GRID_POINTS - 1) as f64;
            (0..SVM_GRID_POINTS)
                .map(|i| LearnerSpec::LinearSvm(LinearSvmSpec { c: 10f64.powf(lo + step * i as f64) }))
                .collect()
        }
        LearnerFamily::Logistic => vec![LearnerSpec::Logistic(LogisticSpec::default())],
    }
}

/// Which part of a grid to search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GridMode {
    #[default]
    Full,
    /// Every k-th spec in enumeration order, starting at the first.
    Strided(usize),
    /// The smallest stride leaving at most this many specs per family.
    AtMost(usize),
}

impl GridMode {
    pub fn select(&self, grid: Vec<LearnerSpec>) -> Vec<(usize, LearnerSpec)> {
        let stride = match *self {
            GridMode::Full => 1,
            GridMode::Strided(k) => k.max(1),
            GridMode::AtMost(n) => grid.len().div_ceil(n.max(1)).max(1),
        };
        grid.into_iter().enumerate().step_by(stride).collect()
    }
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridMode::Full => f.write_str("full"),
            GridMode::Strided(k) => write!(f, "strided:{k}"),
            GridMode::AtMost(n) => write!(f, "at_most:{n}"),
        }
    }
}

impl FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid mode must be full, strided:<k> or at_most:<n>, got {s:?}"));
        let s = s.trim();
        if s == "full" {
            return Ok(GridMode::Full);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind.trim() {
            "strided" => Ok(GridMode::Strided(n)),
            "at_most" => Ok(GridMode::AtMost(n)),
            _ => Err(bad()),
        }
    }
}

impl From<GridMode> for String {
    fn from(g: GridMode) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for GridMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Position in the full enumeration.
    pub index: usize,
    pub spec: LearnerSpec,
    pub score: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: LearnerSpec,
    pub best_index: usize,
    pub score: f64,
    pub trace: Vec<TraceRow>,
    /// The winning spec fitted on the training part only.
    pub model: TrainedModel,
}

/// Seed used for the spec at `index` of a grid.
pub fn spec_seed(seed: u64, index: usize) -> u64 {
    rng::derive(seed, index as u64)
}

/// Fits each spec on `train` and keeps the best validation macro-F1;
/// ties go to the earliest spec.
pub fn search(
    specs: &[(usize, LearnerSpec)],
    train: &[&AccidentRecord],
    validation: &[&AccidentRecord],
    outcome: OutcomeKind,
    weights: &ClassWeights,
    seed: u64,
    conv: &MetricConventions,
) -> Result<SearchResult> {
    let validation: Vec<&AccidentRecord> = validation.iter().copied().filter(|r| r.label(outcome).is_some()).collect();
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if specs.is_empty() {
        return Err(Error::InvalidSpec("empty grid".into()));
    }
    let truth: Vec<&str> = validation.iter().map(|r| r.label(outcome).unwrap()).collect();
    let mut trace = Vec::with_capacity(specs.len());
    let mut best: Option<(usize, TrainedModel, f64)> = None;
    for (pos, &(index, spec)) in specs.iter().enumerate() {
        let start = Instant::now();
        let model = fit(&spec, train, outcome, weights, spec_seed(seed, index))?;
        let pred = model.predict_labels(validation.iter().copied())?;
        let score = score_labels(&truth, &pred, &model.categories, conv)?.macro_f1;
        trace.push(TraceRow {
            index,
            spec,
            score,
            wall_time: start.elapsed(),
        });
        if best.as_ref().is_none_or(|(_, _, s)| score > *s) {
            best = Some((pos, model, score));
        }
    }
    let (pos, model, score) = best.expect("grid is nonempty");
    Ok(SearchResult {
        best: specs[pos].1,
        best_index: specs[pos].0,
        score,
        trace,
        model,
    })
}

/// Grid search on one split, with the grid chosen by `mode`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    family: LearnerFamily,
    pool: &RecordPool,
    split: &SplitSet,
    outcome: OutcomeKind,
    weights: &ClassWeights,
    seed: u64,
    mode: GridMode,
    conv: &MetricConventions,
) -> Result<SearchResult> {
    let specs = mode.select(enumerate_grid(family));
    let train: Vec<&AccidentRecord> = pool.resolve(&split.train).collect();
    let validation: Vec<&AccidentRecord> = pool.resolve(&split.validation).collect();
    search(&specs, &train, &validation, outcome, weights, seed, conv)
}

/// Class weights from the records' counts for `outcome`.
pub fn weights_for(records: &[&AccidentRecord], outcome: OutcomeKind) -> Result<ClassWeights> {
    compute_class_weights(&category_counts(records.iter().copied(), outcome))
}

/// Refits `best` on train and validation, with weights recomputed on the union.
pub fn refit_final(
    best: &LearnerSpec,
    pool: &RecordPool,
    split: &SplitSet,
    outcome: OutcomeKind,
    seed: u64,
) -> Result<TrainedModel> {
    let ids = split.train_and_validation();
    let union: Vec<&AccidentRecord> = pool.resolve(&ids).collect();
    let weights = weights_for(&union, outcome)?;
    fit(best, &union, outcome, &weights, seed)
}

/// Writes the trace as CSV: family, index, spec parameters, score, wall time.
pub fn write_trace_to<W: Write>(writer: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["family", "index", "params", "validation_macro_f1", "wall_time_s"])?;
    for row in trace {
        let params: Vec<String> = row.spec.params().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([
            row.spec.family().as_str().to_string(),
            row.index.to_string(),
            params.join(";"),
            row.score.to_string(),
            format!("{:.6}", row.wall_time.as_secs_f64()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(file, trace)
}
