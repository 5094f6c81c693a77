//! Synthetic data: the label-imbalance difficulty study and a multi-company
//! pool generator.

pub mod imbalance;
pub mod pool;

pub use imbalance::{
    baseline_difficulty, baseline_difficulty_from_counts, difficulty_curve, draw_imbalanced_labels, draw_label_counts,
    draw_probabilities, write_curve_to, Baseline, CurveConfig,
    DifficultyRow, ImbalanceSpec,
};
pub use pool::{generate_pool, CompanySpec, PoolSpec, RuleRegime};
