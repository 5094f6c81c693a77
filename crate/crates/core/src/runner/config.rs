//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::LearnerFamily;
use crate::metrics::MetricConventions;
use crate::records::{header_lexicon, read_pool, EligibilityRule, Lexicon, Taxonomy};
use crate::splitting::SplitRatios;
use crate::synth::{generate_pool, PoolSpec};
use crate::tuning::GridMode;
use crate::records::AccidentRecord;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSource {
    /// Ingestion CSV, relative to the config file.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<PoolSpec>,
    /// Attribute lexicon file; the built-in list when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Outcome taxonomy file; the built-in lists when absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
}

fn default_families() -> Vec<LearnerFamily> {
    LearnerFamily::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridMode,
    #[serde(default = "default_families")]
    pub families: Vec<LearnerFamily>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Write fitted models under `out/models`.
    #[serde(default = "default_true")]
    pub persist_models: bool,
    pub pool: PoolSource,
    #[serde(default)]
    pub eligibility: EligibilityRule,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub metrics: MetricConventions,
}

impl ExperimentConfig {
    pub fn new(pool: PoolSource) -> Self {
        ExperimentConfig {
            seed: 0,
            grid: GridMode::Full,
            families: default_families(),
            out: None,
            persist_models: true,
            pool,
            eligibility: EligibilityRule::default(),
            split: SplitRatios::default(),
            metrics: MetricConventions::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.pool.csv);
        rebase(&mut cfg.pool.lexicon);
        rebase(&mut cfg.pool.taxonomy);
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.pool.csv, &self.pool.synth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::Config("pool needs exactly one of `csv` or `synth`".into())),
        }
        if self.families.is_empty() {
            return Err(Error::Config("no learner families selected".into()));
        }
        let mut fams = self.families.clone();
        fams.sort();
        fams.dedup();
        if fams.len() != self.families.len() {
            return Err(Error::Config("learner family listed twice".into()));
        }
        if self.eligibility.min_categories < 2 {
            return Err(Error::Config("eligibility needs at least two categories".into()));
        }
        self.split.validate()?;
        if !(0.0..=1.0).contains(&self.metrics.zero_division) {
            return Err(Error::Config("zero_division must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        match &self.pool.taxonomy {
            Some(p) => Taxonomy::load(p),
            None => Ok(Taxonomy::default()),
        }
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match (&self.pool.lexicon, &self.pool.synth) {
            (Some(p), _) => Lexicon::load(p),
            (None, Some(spec)) => Ok(Lexicon::numbered(spec.n_attributes)),
            (None, None) => match &self.pool.csv {
                Some(csv) => header_lexicon(csv),
                None => Ok(Lexicon::default()),
            },
        }
    }

    /// Reads or generates the record pool.
    pub fn load_records(&self) -> Result<Vec<AccidentRecord>> {
        let taxonomy = self.taxonomy()?;
        match (&self.pool.csv, &self.pool.synth) {
            (Some(path), _) => read_pool(path, &self.lexicon()?, &taxonomy),
            (None, Some(spec)) => generate_pool(spec, &taxonomy),
            (None, None) => Err(Error::Config("no pool source".into())),
        }
    }
}
