use std::path::PathBuf;

use thiserror::Error;

use crate::records::OutcomeKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ingestion
    #[error("unknown category {label:?} for outcome {outcome}")]
    UnknownCategory { outcome: OutcomeKind, label: String },
    #[error("bad value for attribute #{index}")]
    BadAttributeValue { index: usize },
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("record has no outcome labels")]
    NoOutcome,
    #[error("duplicate record id {0}")]
    DuplicateRecordId(u64),

    // splitting
    #[error("cannot split an empty record set")]
    EmptyInput,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("pooled splits disagree on outcome")]
    MixedOutcome,
    #[error("per-domain pooling across different domains")]
    MixedDomain,

    // weighting
    #[error("category {0:?} has a zero count")]
    ZeroCount(String),

    // learners
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has fewer than two categories")]
    SingleCategory,
    #[error("no class weight for category {0:?}")]
    MissingWeight(String),
    #[error("model only emits labels, not distributions")]
    LabelOnlyModel,
    #[error("attribute vector has {got} flags, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("invalid learner parameter: {0}")]
    InvalidSpec(String),

    // ensemble
    #[error("category {0:?} is not in the target list")]
    CategoryNotInTarget(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label-only (SVM) models cannot be stacked")]
    SvmNotStackable,
    #[error("validation set is empty")]
    EmptyValidation,

    // metrics
    #[error("label {0:?} is not in the category list")]
    UnknownLabel(String),

    // synth
    #[error("inconsistent rule set: {0}")]
    InconsistentRules(String),

    // runner / io
    #[error("config error: {0}")]
    Config(String),
    #[error("no eligible combination in pool")]
    NoEligibleCombination,
    #[error("unsupported model file: {0}")]
    ModelFormat(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration and schema errors, as opposed to runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::BadRatios(_)
                | Error::InvalidSpec(_)
                | Error::InconsistentRules(_)
        )
    }
}
