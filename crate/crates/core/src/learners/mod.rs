//! The four learner families and a common fitted-model type.

pub mod boosting;
pub(crate) mod data;
pub mod forest;
pub mod logistic;
mod optim;
pub mod persist;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{AccidentRecord, AttributeVector, OutcomeKind};
use crate::weighting::ClassWeights;

use boosting::BoostedTrees;
use data::TrainingData;
use forest::Forest;
use logistic::{LinearDesign, LinearParams};

pub use persist::{load_model, save_model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerFamily {
    RandomForest,
    Boosting,
    LinearSvm,
    Logistic,
}

impl LearnerFamily {
    pub const ALL: [LearnerFamily; 4] = [
        LearnerFamily::RandomForest,
        LearnerFamily::Boosting,
        LearnerFamily::LinearSvm,
        LearnerFamily::Logistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerFamily::RandomForest => "random_forest",
            LearnerFamily::Boosting => "boosting",
            LearnerFamily::LinearSvm => "linear_svm",
            LearnerFamily::Logistic => "logistic",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            LearnerFamily::RandomForest => "RF",
            LearnerFamily::Boosting => "XGB",
            LearnerFamily::LinearSvm => "SVM",
            LearnerFamily::Logistic => "LR",
        }
    }
}

impl fmt::Display for LearnerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        LearnerFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.short().eq_ignore_ascii_case(&s))
            .or(match s.as_str() {
                "rf" => Some(LearnerFamily::RandomForest),
                "xgboost" | "gbm" => Some(LearnerFamily::Boosting),
                "svm" => Some(LearnerFamily::LinearSvm),
                "lr" => Some(LearnerFamily::Logistic),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown learner family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForestSpec {
    pub ntree: usize,
    /// Attributes drawn per split; capped at the attribute count.
    pub mtry: usize,
    /// Minimum bootstrap samples per leaf.
    pub nodesize: usize,
}

fn default_ntrees() -> usize {
    2000
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostingSpec {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample_bylevel: f64,
    #[serde(default = "default_ntrees")]
    pub ntrees: usize,
    #[serde(default = "default_lambda")]
    pub reg_lambda: f64,
}

impl BoostingSpec {
    pub fn new(max_depth: usize, learning_rate: f64, min_child_weight: f64, subsample: f64, colsample_bylevel: f64) -> Self {
        BoostingSpec {
            max_depth,
            learning_rate,
            min_child_weight,
            subsample,
            colsample_bylevel,
            ntrees: default_ntrees(),
            reg_lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSvmSpec {
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub c: f64,
}

impl Default for LogisticSpec {
    fn default() -> Self {
        LogisticSpec { c: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearnerSpec {
    RandomForest(RandomForestSpec),
    Boosting(BoostingSpec),
    LinearSvm(LinearSvmSpec),
    Logistic(LogisticSpec),
}

impl LearnerSpec {
    pub fn family(&self) -> LearnerFamily {
        match self {
            LearnerSpec::RandomForest(_) => LearnerFamily::RandomForest,
            LearnerSpec::Boosting(_) => LearnerFamily::Boosting,
            LearnerSpec::LinearSvm(_) => LearnerFamily::LinearSvm,
            LearnerSpec::Logistic(_) => LearnerFamily::Logistic,
        }
    }

    pub fn output_kind(&self) -> OutputKind {
        match self {
            LearnerSpec::LinearSvm(_) => OutputKind::LabelOnly,
            _ => OutputKind::Probabilistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        match *self {
            LearnerSpec::RandomForest(s) => {
                if s.ntree == 0 || s.mtry == 0 || s.nodesize == 0 {
                    return bad("ntree, mtry and nodesize must be positive");
                }
            }
            LearnerSpec::Boosting(s) => {
                if s.max_depth == 0 {
                    return bad("max_depth must be positive");
                }
                if !(s.learning_rate >= 0.0 && s.learning_rate.is_finite()) {
                    return bad("learning_rate must be finite and non-negative");
                }
                if !(s.min_child_weight >= 0.0) || !(s.reg_lambda >= 0.0) {
                    return bad("min_child_weight and reg_lambda must be non-negative");
                }
                if !unit(s.subsample) || !unit(s.colsample_bylevel) {
                    return bad("subsample and colsample_bylevel must lie in (0, 1]");
                }
            }
            LearnerSpec::LinearSvm(LinearSvmSpec { c }) | LearnerSpec::Logistic(LogisticSpec { c }) => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad("C must be positive and finite");
                }
            }
        }
        Ok(())
    }

    /// Hyperparameter names and values, for traces and reports.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        match self {
            LearnerSpec::RandomForest(s) => vec![
                ("ntree", s.ntree.to_string()),
                ("mtry", s.mtry.to_string()),
                ("nodesize", s.nodesize.to_string()),
            ],
            LearnerSpec::Boosting(s) => vec![
                ("max_depth", s.max_depth.to_string()),
                ("learning_rate", s.learning_rate.to_string()),
                ("min_child_weight", s.min_child_weight.to_string()),
                ("subsample", s.subsample.to_string()),
                ("colsample_bylevel", s.colsample_bylevel.to_string()),
                ("ntrees", s.ntrees.to_string()),
            ],
            LearnerSpec::LinearSvm(s) => vec![("C", format!("{:e}", s.c))],
            LearnerSpec::Logistic(s) => vec![("C", s.c.to_string())],
        }
    }

    pub fn describe(&self) -> String {
        let params: Vec<String> = self.params().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.family().short(), params.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Probabilistic,
    LabelOnly,
}

/// A distribution over an ordered category list.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticForecast {
    pub categories: Vec<String>,
    pub probs: Vec<f64>,
}

impl ProbabilisticForecast {
    pub fn new(categories: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if categories.len() != probs.len() {
            return Err(Error::LengthMismatch(categories.len(), probs.len()));
        }
        Ok(ProbabilisticForecast { categories, probs })
    }

    pub fn argmax(&self) -> &str {
        &self.categories[argmax(&self.probs)]
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum FittedParams {
    RandomForest(Forest),
    Boosting(BoostedTrees),
    LinearSvm(LinearParams),
    Logistic(LinearParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    /// Categories present in training, in canonical (lexicographic) order.
    pub categories: Vec<String>,
    pub seed: u64,
    pub n_features: usize,
    pub params: FittedParams,
}

pub fn fit(
    spec: &LearnerSpec,
    train: &[&AccidentRecord],
    outcome: OutcomeKind,
    weights: &ClassWeights,
    seed: u64,
) -> Result<TrainedModel> {
    spec.validate()?;
    let data = TrainingData::from_records(train, outcome, weights)?;
    if data.k() < 2 {
        return Err(Error::SingleCategory);
    }
    let params = match spec {
        LearnerSpec::RandomForest(s) => FittedParams::RandomForest(Forest::fit(&data, s, seed)),
        LearnerSpec::Boosting(s) => FittedParams::Boosting(boosting::fit(&data, s, seed, false).model),
        LearnerSpec::LinearSvm(s) => FittedParams::LinearSvm(svm::fit(&data, s.c, seed)),
        LearnerSpec::Logistic(s) => {
            FittedParams::Logistic(logistic::fit_softmax(&LinearDesign::from_training(&data), s.c))
        }
    };
    Ok(TrainedModel {
        spec: *spec,
        categories: data.categories,
        seed,
        n_features: data.n_features,
        params,
    })
}

/// Weighted training loss before boosting and after every round.
pub fn boosting_loss_trace(
    spec: &BoostingSpec,
    train: &[&AccidentRecord],
    outcome: OutcomeKind,
    weights: &ClassWeights,
    seed: u64,
) -> Result<Vec<f64>> {
    LearnerSpec::Boosting(*spec).validate()?;
    let data = TrainingData::from_records(train, outcome, weights)?;
    if data.k() < 2 {
        return Err(Error::SingleCategory);
    }
    Ok(boosting::fit(&data, spec, seed, true).loss)
}

impl TrainedModel {
    pub fn family(&self) -> LearnerFamily {
        self.spec.family()
    }

    pub fn kind(&self) -> OutputKind {
        self.spec.output_kind()
    }

    pub fn is_probabilistic(&self) -> bool {
        self.kind() == OutputKind::Probabilistic
    }

    fn check(&self, x: &AttributeVector) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Probabilities over `categories`.
    pub fn predict_proba(&self, x: &AttributeVector) -> Result<Vec<f64>> {
        self.check(x)?;
        let bit = |f: u32| x.get(f as usize);
        Ok(match &self.params {
            FittedParams::RandomForest(forest) => forest.predict_by(self.categories.len(), bit),
            FittedParams::Boosting(b) => {
                let mut s = b.scores_by(bit);
                boosting::softmax_in_place(&mut s);
                s
            }
            FittedParams::Logistic(p) => {
                let mut s = p.scores_binary(x.flags());
                boosting::softmax_in_place(&mut s);
                s
            }
            FittedParams::LinearSvm(_) => return Err(Error::LabelOnlyModel),
        })
    }

    pub fn predict_distribution(&self, x: &AttributeVector) -> Result<ProbabilisticForecast> {
        Ok(ProbabilisticForecast {
            categories: self.categories.clone(),
            probs: self.predict_proba(x)?,
        })
    }

    pub fn predict_index(&self, x: &AttributeVector) -> Result<usize> {
        match &self.params {
            FittedParams::LinearSvm(p) => {
                self.check(x)?;
                Ok(argmax(&p.scores_binary(x.flags())))
            }
            _ => Ok(argmax(&self.predict_proba(x)?)),
        }
    }

    pub fn predict_label(&self, x: &AttributeVector) -> Result<&str> {
        Ok(&self.categories[self.predict_index(x)?])
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

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.8]), 1);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn spec_serde_is_tagged() {
        let s = LearnerSpec::Boosting(BoostingSpec::new(3, 0.1, 1.0, 0.5, 1.0));
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"family\":\"boosting\""));
        let back: LearnerSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let old: LearnerSpec = serde_json::from_str(
            r#"{"family":"boosting","max_depth":3,"learning_rate":0.1,"min_child_weight":1,"subsample":1,"colsample_bylevel":1}"#,
        )
        .unwrap();
        assert!(matches!(old, LearnerSpec::Boosting(BoostingSpec { ntrees: 2000, .. })));
    }

    #[test]
    fn validation() {
        assert!(LearnerSpec::LinearSvm(LinearSvmSpec { c: 0.0 }).validate().is_err());
        assert!(LearnerSpec::Boosting(BoostingSpec::new(3, 0.1, 1.0, 0.0, 1.0)).validate().is_err());
        assert!(LearnerSpec::RandomForest(RandomForestSpec { ntree: 1, mtry: 1, nodesize: 1 })
            .validate()
            .is_ok());
    }

    #[test]
    fn family_names() {
        for f in LearnerFamily::ALL {
            assert_eq!(f.as_str().parse::<LearnerFamily>().unwrap(), f);
            assert_eq!(f.short().parse::<LearnerFamily>().unwrap(), f);
        }
        assert!("tree".parse::<LearnerFamily>().is_err());
    }
}
