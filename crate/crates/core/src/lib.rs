//! Generic-vs-specific safety outcome prediction.

pub mod ensemble;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod records;
pub mod rng;
pub mod runner;
pub mod splitting;
pub mod synth;
pub mod tuning;
pub mod weighting;

pub use error::{Error, Result};
