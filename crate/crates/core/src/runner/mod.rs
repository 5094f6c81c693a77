//! Experiment orchestration: task enumeration, tuning, ensembles, evaluation.

pub mod config;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{fit_stacker_on, BlendCoefficients, StackedModel};
use crate::error::{Error, Result};
use crate::learners::{persist, save_model, LearnerFamily, TrainedModel};
use crate::metrics::{label_union, score_labels, summarize_gains, GainSummary, MetricConventions, ScoreTable};
use crate::records::{
    eligible_combinations_with, specific_training_keys, AccidentRecord, CombinationKey, Domain, OutcomeKind,
    RecordId, RecordPool, Scope,
};
use crate::rng;
use crate::splitting::{pool_splits, split_combination, write_manifest, SplitSet};
use crate::tuning::{grid_search, refit_final, spec_seed, weights_for, write_trace, SearchResult};

pub use config::{ExperimentConfig, PoolSource};
pub use report::{emit_report, read_report_json, write_report_json, ReportFormat};

/// Splits for every eligible combination and the pooled tasks built on them.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Every eligible combination, corporate included.
    pub eligible: Vec<CombinationKey>,
    pub specific: Vec<CombinationKey>,
    pub per_domain: Vec<CombinationKey>,
    pub full: Vec<CombinationKey>,
    pub splits: BTreeMap<CombinationKey, SplitSet>,
}

impl Plan {
    pub fn split(&self, key: &CombinationKey) -> Option<&SplitSet> {
        self.splits.get(key)
    }

    /// Tasks that get models: specific, then per-domain, then full.
    pub fn tasks(&self) -> impl Iterator<Item = &CombinationKey> {
        self.specific.iter().chain(&self.per_domain).chain(&self.full)
    }

    pub fn find(&self, slug: &str) -> Option<&CombinationKey> {
        self.splits.keys().find(|k| k.slug() == slug)
    }
}

pub fn split_seed(seed: u64, key: &CombinationKey) -> u64 {
    rng::derive_str(seed, &key.slug())
}

/// Training seed of a learner family; independent of the task so identical
/// training data yields identical models in every scope.
pub fn family_seed(seed: u64, family: LearnerFamily) -> u64 {
    rng::derive_str(seed, family.as_str())
}

pub fn plan(pool: &RecordPool, cfg: &ExperimentConfig) -> Result<Plan> {
    let eligible = eligible_combinations_with(pool.records(), &cfg.eligibility);
    let specific = specific_training_keys(&eligible);
    if specific.is_empty() {
        return Err(Error::NoEligibleCombination);
    }
    let mut splits = BTreeMap::new();
    for key in &eligible {
        let ids: Vec<RecordId> = pool
            .combination(key.company().unwrap(), key.domain().unwrap(), key.outcome)
            .iter()
            .map(|r| r.id)
            .collect();
        let split = split_combination(key.clone(), &ids, &cfg.split, split_seed(cfg.seed, key))?;
        splits.insert(key.clone(), split);
    }

    let mut per_domain = Vec::new();
    let mut full = Vec::new();
    let outcomes: Vec<OutcomeKind> = OutcomeKind::ALL
        .into_iter()
        .filter(|o| specific.iter().any(|k| k.outcome == *o))
        .collect();
    for &outcome in &outcomes {
        for domain in Domain::ALL.into_iter().filter(|d| d.trains_own_models()) {
            let parts: Vec<SplitSet> = specific
                .iter()
                .filter(|k| k.outcome == outcome && k.domain() == Some(domain))
                .map(|k| splits[k].clone())
                .collect();
            if !parts.is_empty() {
                let key = CombinationKey::per_domain(domain, outcome);
                splits.insert(key.clone(), pool_splits(&parts, key.scope.clone())?);
                per_domain.push(key);
            }
        }
    }
    for &outcome in &outcomes {
        let parts: Vec<SplitSet> = eligible
            .iter()
            .filter(|k| k.outcome == outcome)
            .map(|k| splits[k].clone())
            .collect();
        let key = CombinationKey::full(outcome);
        splits.insert(key.clone(), pool_splits(&parts, Scope::Full)?);
        full.push(key);
    }
    Ok(Plan {
        eligible,
        specific,
        per_domain,
        full,
        splits,
    })
}

/// One family tuned and refitted on one task.
#[derive(Debug, Clone)]
pub struct FamilyFit {
    pub family: LearnerFamily,
    pub search: SearchResult,
    /// The best spec refitted on train and validation.
    pub final_model: TrainedModel,
}

/// Every requested family on one task; failures kept as messages.
#[derive(Debug, Clone)]
pub struct TaskFit {
    pub families: Vec<(LearnerFamily, std::result::Result<FamilyFit, String>)>,
}

impl TaskFit {
    pub fn get(&self, family: LearnerFamily) -> std::result::Result<&FamilyFit, String> {
        match self.families.iter().find(|(f, _)| *f == family) {
            Some((_, Ok(fit))) => Ok(fit),
            Some((_, Err(e))) => Err(e.clone()),
            None => Err(format!("{family} not run")),
        }
    }

    /// Highest validation score; ties go to the earlier family.
    pub fn best(&self) -> Option<&FamilyFit> {
        let mut best: Option<&FamilyFit> = None;
        for (_, fit) in &self.families {
            if let Ok(fit) = fit {
                if best.is_none_or(|b| fit.search.score > b.search.score) {
                    best = Some(fit);
                }
            }
        }
        best
    }
}

pub fn fit_family(
    family: LearnerFamily,
    pool: &RecordPool,
    split: &SplitSet,
    cfg: &ExperimentConfig,
) -> Result<FamilyFit> {
    let outcome = split.key.outcome;
    let train: Vec<&AccidentRecord> = pool.resolve(&split.train).collect();
    let weights = weights_for(&train, outcome)?;
    let seed = family_seed(cfg.seed, family);
    let search = grid_search(family, pool, split, outcome, &weights, seed, cfg.grid, &cfg.metrics)?;
    let final_model = refit_final(&search.best, pool, split, outcome, spec_seed(seed, search.best_index))?;
    Ok(FamilyFit {
        family,
        search,
        final_model,
    })
}

pub fn fit_task(pool: &RecordPool, split: &SplitSet, cfg: &ExperimentConfig) -> TaskFit {
    TaskFit {
        families: cfg
            .families
            .iter()
            .map(|&f| (f, fit_family(f, pool, split, cfg).map_err(|e| e.to_string())))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spec,
    GenDomain,
    GenFull,
    EnsDomain,
    EnsFull,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Spec,
        ModelKind::GenDomain,
        ModelKind::GenFull,
        ModelKind::EnsDomain,
        ModelKind::EnsFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Spec => "spec",
            ModelKind::GenDomain => "gen_domain",
            ModelKind::GenFull => "gen_full",
            ModelKind::EnsDomain => "ens_domain",
            ModelKind::EnsFull => "ens_full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    NotStackable,
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::NotStackable => "not stackable".into(),
            RowStatus::Failed(m) => format!("failed: {m}"),
        }
    }
}

/// Scores of one model on one specific test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub key: CombinationKey,
    pub kind: ModelKind,
    /// The family requested for this row; `None` for the validation-selected best.
    pub family: Option<LearnerFamily>,
    /// Families actually used, e.g. "RF" or "XGB+LR" for an ensemble.
    pub selected: String,
    pub status: RowStatus,
    pub scores: Option<ScoreTable>,
    pub n_categories: Option<usize>,
    pub coefficients: Option<BlendCoefficients>,
    /// Gain in F1 points over the best specific model.
    pub gain: Option<f64>,
    pub model_artifact: String,
    pub split_manifest: String,
}

impl ScoreRow {
    pub fn family_label(&self) -> &str {
        self.family.map_or("best", |f| f.short())
    }

    pub fn macro_f1(&self) -> Option<f64> {
        self.scores.as_ref().map(|s| s.macro_f1)
    }
}

/// The largest gain a generic or ensemble model achieves on one key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyGain {
    pub key: CombinationKey,
    pub kind: ModelKind,
    pub family: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: ModelKind,
    /// Keys with a score for this kind's best row.
    pub n: usize,
    pub mean_gain: f64,
    pub win_rate: f64,
    pub mean_extra_categories: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ScoreRow>,
    pub key_gains: Vec<KeyGain>,
    pub kind_summaries: Vec<KindSummary>,
}

impl EvaluationReport {
    /// Builds the gain tables from rows.
    pub fn from_rows(rows: Vec<ScoreRow>) -> Self {
        let mut keys: Vec<&CombinationKey> = rows.iter().map(|r| &r.key).collect();
        keys.dedup();
        let mut key_gains = Vec::new();
        for key in keys {
            let best = rows
                .iter()
                .filter(|r| &r.key == key && r.kind != ModelKind::Spec)
                .filter_map(|r| r.gain.map(|g| (r, g)))
                .fold(None::<(&ScoreRow, f64)>, |acc, (r, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((r, g)),
                });
            if let Some((r, g)) = best {
                key_gains.push(KeyGain {
                    key: key.clone(),
                    kind: r.kind,
                    family: r.family_label().to_string(),
                    gain: g,
                });
            }
        }

        let spec_best: HashMap<&CombinationKey, &ScoreRow> = rows
            .iter()
            .filter(|r| r.kind == ModelKind::Spec && r.family.is_none() && r.status == RowStatus::Ok)
            .map(|r| (&r.key, r))
            .collect();
        let kind_summaries = ModelKind::ALL[1..]
            .iter()
            .map(|&kind| {
                let best_rows: Vec<&ScoreRow> = rows
                    .iter()
                    .filter(|r| r.kind == kind && r.family.is_none() && r.gain.is_some())
                    .collect();
                let n = best_rows.len();
                let mean = |f: &dyn Fn(&ScoreRow) -> f64| {
                    if n == 0 {
                        0.0
                    } else {
                        best_rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
                    }
                };
                KindSummary {
                    kind,
                    n,
                    mean_gain: mean(&|r| r.gain.unwrap()),
                    win_rate: mean(&|r| (r.gain.unwrap() > 0.0) as u8 as f64),
                    mean_extra_categories: mean(&|r| {
                        let spec = spec_best.get(&r.key).and_then(|s| s.n_categories).unwrap_or(0);
                        r.n_categories.unwrap_or(0) as f64 - spec as f64
                    }),
                }
            })
            .collect();
        EvaluationReport {
            rows,
            key_gains,
            kind_summaries,
        }
    }

    pub fn from_key_gains(key_gains: Vec<KeyGain>) -> Self {
        EvaluationReport {
            rows: Vec::new(),
            key_gains,
            kind_summaries: Vec::new(),
        }
    }

    /// Fraction of keys where some generic or ensemble model beats the best
    /// specific one.
    pub fn win_rate(&self) -> f64 {
        if self.key_gains.is_empty() {
            return 0.0;
        }
        self.key_gains.iter().filter(|g| g.gain > 0.0).count() as f64 / self.key_gains.len() as f64
    }

    /// min / max / mean over the positive per-key gains.
    pub fn positive_gain_summary(&self) -> Option<GainSummary> {
        let pos: Vec<f64> = self.key_gains.iter().map(|g| g.gain).filter(|&g| g > 0.0).collect();
        summarize_gains(&pos)
    }

    pub fn row(&self, key: &CombinationKey, kind: ModelKind, family: Option<LearnerFamily>) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| &r.key == key && r.kind == kind && r.family == family)
    }
}

/// Scores a model's labels on `records` against the union of `extra` and the
/// observed categories.
pub fn score_on(
    labels: &[String],
    records: &[&AccidentRecord],
    outcome: OutcomeKind,
    extra: &[String],
    conv: &MetricConventions,
) -> Result<ScoreTable> {
    let truth: Vec<&str> = records.iter().map(|r| r.label(outcome).unwrap_or("")).collect();
    score_labels(&truth, labels, extra, conv)
}

pub fn evaluate_model(
    model: &TrainedModel,
    pool: &RecordPool,
    split: &SplitSet,
    conv: &MetricConventions,
) -> Result<ScoreTable> {
    let test: Vec<&AccidentRecord> = pool.resolve(&split.test).collect();
    let pred = model.predict_labels(test.iter().copied())?;
    score_on(&pred, &test, split.key.outcome, &model.categories, conv)
}

/// Fits the stacker on train-only bases, then moves it onto the refitted
/// bases when their category lists agree.
pub fn build_stack(
    generic: &FamilyFit,
    specific: &FamilyFit,
    validation: &[&AccidentRecord],
    outcome: OutcomeKind,
    conv: &MetricConventions,
) -> Result<StackedModel> {
    let fit = fit_stacker_on(&generic.search.model, &specific.search.model, validation, outcome, conv)?;
    Ok(fit
        .model
        .with_bases(generic.final_model.clone(), specific.final_model.clone())
        .unwrap_or(fit.model))
}

struct Artifacts {
    root: Option<PathBuf>,
    persist_models: bool,
}

impl Artifacts {
    fn manifest(&self, split: &SplitSet) -> Result<String> {
        let rel = format!("splits/{}.csv", split.key.slug());
        if let Some(root) = &self.root {
            write_manifest(&root.join(&rel), split)?;
            return Ok(rel);
        }
        Ok(String::new())
    }

    fn model<T: Serialize>(&self, name: &str, model: &T) -> Result<String> {
        match &self.root {
            Some(root) if self.persist_models => {
                let rel = format!("models/{name}.json");
                persist::save(&root.join(&rel), model)?;
                Ok(rel)
            }
            _ => Ok(String::new()),
        }
    }

    fn trace(&self, name: &str, fit: &FamilyFit) -> Result<()> {
        if let Some(root) = &self.root {
            let dir = root.join("traces");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_trace(&dir.join(format!("{name}.csv")), &fit.search.trace)?;
        }
        Ok(())
    }
}

fn sorted(ids: &[RecordId]) -> Vec<RecordId> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let pool = RecordPool::new(cfg.load_records()?)?;
    run_on_pool(cfg, &pool)
}

pub fn run_on_pool(cfg: &ExperimentConfig, pool: &RecordPool) -> Result<EvaluationReport> {
    cfg.validate()?;
    let plan = plan(pool, cfg)?;
    let art = Artifacts {
        root: cfg.out.clone(),
        persist_models: cfg.persist_models,
    };
    let mut manifests: HashMap<CombinationKey, String> = HashMap::new();
    for (key, split) in &plan.splits {
        manifests.insert(key.clone(), art.manifest(split)?);
    }

    // Fit every task once; tasks with identical training data share fits.
    type DataKey = (OutcomeKind, Vec<RecordId>, Vec<RecordId>);
    let mut fits: Vec<TaskFit> = Vec::new();
    let mut by_data: HashMap<DataKey, usize> = HashMap::new();
    let mut task_fit: HashMap<CombinationKey, usize> = HashMap::new();
    let mut model_paths: HashMap<(CombinationKey, LearnerFamily), String> = HashMap::new();
    for key in plan.tasks() {
        let split = &plan.splits[key];
        let data_key = (key.outcome, sorted(&split.train), sorted(&split.validation));
        let idx = *by_data.entry(data_key).or_insert_with(|| {
            fits.push(fit_task(pool, split, cfg));
            fits.len() - 1
        });
        task_fit.insert(key.clone(), idx);
        for (family, fit) in &fits[idx].families {
            if let Ok(fit) = fit {
                let name = format!("{}__{}", key.slug(), family);
                art.trace(&name, fit)?;
                let path = art.model(&name, &fit.final_model)?;
                model_paths.insert((key.clone(), *family), path);
            }
        }
    }

    let mut rows = Vec::new();
    for key in &plan.specific {
        let split = &plan.splits[key];
        let outcome = key.outcome;
        let test: Vec<&AccidentRecord> = pool.resolve(&split.test).collect();
        let validation: Vec<&AccidentRecord> = pool.resolve(&split.validation).collect();
        let domain_key = CombinationKey::per_domain(key.domain().unwrap(), outcome);
        let full_key = CombinationKey::full(outcome);
        let spec_fit = &fits[task_fit[key]];
        let domain_fit = &fits[task_fit[&domain_key]];
        let full_fit = &fits[task_fit[&full_key]];
        let extra: Vec<String> = full_fit
            .families
            .iter()
            .filter_map(|(_, f)| f.as_ref().ok())
            .flat_map(|f| f.final_model.categories.iter().cloned())
            .collect();
        let extra = label_union::<&str, &str>(&[], &[], &extra);
        let manifest = manifests[key].clone();

        let mut key_rows: Vec<ScoreRow> = Vec::new();
        let blank = |kind: ModelKind, family: Option<LearnerFamily>| ScoreRow {
            key: key.clone(),
            kind,
            family,
            selected: String::new(),
            status: RowStatus::Ok,
            scores: None,
            n_categories: None,
            coefficients: None,
            gain: None,
            model_artifact: String::new(),
            split_manifest: manifest.clone(),
        };
        let mut families: Vec<Option<LearnerFamily>> = cfg.families.iter().copied().map(Some).collect();
        families.push(None);

        let single = [
            (ModelKind::Spec, spec_fit, key),
            (ModelKind::GenDomain, domain_fit, &domain_key),
            (ModelKind::GenFull, full_fit, &full_key),
        ];
        for (kind, task, task_key) in single {
            for &family in &families {
                let mut row = blank(kind, family);
                let fit = match family {
                    Some(f) => task.get(f),
                    None => task.best().ok_or_else(|| "no family succeeded".to_string()),
                };
                match fit {
                    Ok(fit) => {
                        let model = &fit.final_model;
                        row.selected = fit.family.short().to_string();
                        row.model_artifact = model_paths.get(&(task_key.clone(), fit.family)).cloned().unwrap_or_default();
                        row.n_categories = Some(model.categories.len());
                        match model
                            .predict_labels(test.iter().copied())
                            .and_then(|pred| score_on(&pred, &test, outcome, &extra, &cfg.metrics))
                        {
                            Ok(s) => row.scores = Some(s),
                            Err(e) => row.status = RowStatus::Failed(e.to_string()),
                        }
                    }
                    Err(e) => row.status = RowStatus::Failed(e),
                }
                key_rows.push(row);
            }
        }

        let stacks = [
            (ModelKind::EnsDomain, domain_fit, "ens_domain"),
            (ModelKind::EnsFull, full_fit, "ens_full"),
        ];
        for (kind, gen_task, tag) in stacks {
            for &family in &families {
                let mut row = blank(kind, family);
                let pair = match family {
                    Some(f) => gen_task.get(f).and_then(|g| spec_fit.get(f).map(|s| (g, s))),
                    None => match (gen_task.best(), spec_fit.best()) {
                        (Some(g), Some(s)) => Ok((g, s)),
                        _ => Err("no family succeeded".to_string()),
                    },
                };
                let (g, s) = match pair {
                    Ok(p) => p,
                    Err(e) => {
                        row.status = RowStatus::Failed(e);
                        key_rows.push(row);
                        continue;
                    }
                };
                row.selected = format!("{}+{}", g.family.short(), s.family.short());
                match build_stack(g, s, &validation, outcome, &cfg.metrics) {
                    Err(Error::SvmNotStackable) => row.status = RowStatus::NotStackable,
                    Err(e) => row.status = RowStatus::Failed(e.to_string()),
                    Ok(stack) => {
                        let name = format!("{}__{}__{}", key.slug(), tag, row.family_label());
                        row.model_artifact = art.model(&name, &stack)?;
                        row.n_categories = Some(stack.categories().len());
                        row.coefficients = Some(stack.coefficients);
                        match stack
                            .predict_labels(test.iter().copied())
                            .and_then(|pred| score_on(&pred, &test, outcome, &extra, &cfg.metrics))
                        {
                            Ok(sc) => row.scores = Some(sc),
                            Err(e) => row.status = RowStatus::Failed(e.to_string()),
                        }
                    }
                }
                key_rows.push(row);
            }
        }

        let baseline = key_rows
            .iter()
            .find(|r| r.kind == ModelKind::Spec && r.family.is_none())
            .and_then(ScoreRow::macro_f1);
        if let Some(base) = baseline {
            for r in &mut key_rows {
                r.gain = r.macro_f1().map(|m| 100.0 * (m - base));
            }
        }
        rows.extend(key_rows);
    }
    let report = EvaluationReport::from_rows(rows);
    if let Some(root) = &cfg.out {
        emit_report(&report, &root.join("report"), ReportFormat::Csv)?;
        emit_report(&report, &root.join("report"), ReportFormat::Markdown)?;
        write_report_json(&report, &root.join("report").join("report.json"))?;
    }
    Ok(report)
}

/// Writes split manifests for every planned key under `dir`.
pub fn write_plan(plan: &Plan, dir: &Path) -> Result<Vec<PathBuf>> {
    plan.splits
        .values()
        .map(|split| {
            let path = dir.join(format!("{}.csv", split.key.slug()));
            write_manifest(&path, split).map(|_| path)
        })
        .collect()
}

/// Saves a fitted model under `dir/<name>.json`.
pub fn save_named(dir: &Path, name: &str, model: &TrainedModel) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    save_model(&path, model)?;
    Ok(path)
}
