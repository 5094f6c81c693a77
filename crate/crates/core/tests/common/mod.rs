#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safety_pool::metrics::{confusion, precision_recall_f1};
use safety_pool::records::{AccidentRecord, AttributeVector, Domain, OutcomeKind, RecordId};

pub const OUTCOME: OutcomeKind = OutcomeKind::Severity;

pub fn record(id: u64, flags: Vec<bool>, label: &str) -> AccidentRecord {
    AccidentRecord {
        id: RecordId(id),
        company: "acme".into(),
        domain: Domain::Construction,
        attributes: AttributeVector::new(flags),
        outcomes: [(OUTCOME, label.to_string())].into_iter().collect(),
    }
}

pub fn random_flags(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(0.5)).collect()
}

/// Label "A" or "B" decided by attribute 0; the rest are noise.
pub fn separable_binary(n: usize, n_attr: usize, seed: u64) -> Vec<AccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut flags = random_flags(&mut rng, n_attr);
            flags[0] = i % 2 == 0;
            let label = if flags[0] { "B" } else { "A" };
            record(i as u64 + 1, flags, label)
        })
        .collect()
}

/// Four categories decided by attributes 0 and 1.
pub fn separable_four(n: usize, n_attr: usize, seed: u64) -> Vec<AccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["A", "B", "C", "D"];
    (0..n)
        .map(|i| {
            let flags = random_flags(&mut rng, n_attr);
            let label = names[flags[0] as usize * 2 + flags[1] as usize];
            record(i as u64 + 1, flags, label)
        })
        .collect()
}

/// Random attributes and labels drawn from `k` categories.
pub fn random_dataset(n: usize, n_attr: usize, k: usize, seed: u64) -> Vec<AccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["A", "B", "C", "D", "E", "F"];
    (0..n)
        .map(|i| {
            let flags = random_flags(&mut rng, n_attr);
            let label = if i < k { names[i] } else { names[rng.random_range(0..k)] };
            record(i as u64 + 1, flags, label)
        })
        .collect()
}

/// Attribute 0 predicts the label with 80% accuracy.
pub fn noisy_binary(n: usize, n_attr: usize, seed: u64) -> Vec<AccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let flags = random_flags(&mut rng, n_attr);
            let flip = rng.random_bool(0.2);
            let label = if flags[0] ^ flip { "B" } else { "A" };
            record(i as u64 + 1, flags, label)
        })
        .collect()
}

pub fn truth(records: &[AccidentRecord]) -> Vec<String> {
    records.iter().map(|r| r.label(OUTCOME).unwrap().to_string()).collect()
}

pub fn macro_f1(truth: &[String], pred: &[String]) -> f64 {
    let mut cats: Vec<String> = truth.iter().chain(pred).cloned().collect();
    cats.sort();
    cats.dedup();
    precision_recall_f1(&confusion(truth, pred, &cats).unwrap()).macro_f1
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct WeightRow {
    pub outcome: String,
    pub scope: String,
    pub category: String,
    pub train: u64,
    pub weight: f64,
    pub validation: u64,
    pub test: u64,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct GainRow {
    pub company: String,
    pub domain: String,
    pub outcome: String,
    pub gain: Option<f64>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct KeyRow {
    pub company: String,
    pub domain: String,
    pub outcome: String,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct TotalRow {
    pub outcome: String,
    pub scope: String,
    pub companies: usize,
    pub train: u64,
    pub validation: u64,
    pub test: u64,
}

pub fn load<T: serde::de::DeserializeOwned>(name: &str) -> Vec<T> {
    csv::Reader::from_path(fixture(name))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

/// Count blocks of the weight fixture keyed by (outcome, scope), in file order.
pub fn weight_blocks() -> Vec<((String, String), Vec<WeightRow>)> {
    let mut out: Vec<((String, String), Vec<WeightRow>)> = Vec::new();
    for row in load::<WeightRow>("class_weights.csv") {
        let key = (row.outcome.clone(), row.scope.clone());
        match out.last_mut() {
            Some((k, rows)) if *k == key => rows.push(row),
            _ => out.push((key, vec![row])),
        }
    }
    out
}
