//! Train/validation/test splits per combination, and pooling of those splits
//! into per-domain and full generic splits.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{CombinationKey, RecordId, Scope};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.64,
            validation: 0.16,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::BadRatios(parts));
        }
        Ok(())
    }

    /// `(floor(n*train), floor(n*validation), remainder)`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs binary representation error, e.g. 0.64 * 25
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let validation = floor(self.validation).min(n - train);
        (train, validation, n - train - validation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub key: CombinationKey,
    pub train: Vec<RecordId>,
    pub validation: Vec<RecordId>,
    pub test: Vec<RecordId>,
    pub seed: u64,
}

impl SplitSet {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    /// Train followed by validation, for the final refit.
    pub fn train_and_validation(&self) -> Vec<RecordId> {
        self.train.iter().chain(&self.validation).copied().collect()
    }

    pub fn all_ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.train.iter().chain(&self.validation).chain(&self.test).copied()
    }
}

/// Unstratified sampling without replacement. The result depends only on the
/// set of ids and the seed, not on input order.
pub fn split_combination(
    key: CombinationKey,
    ids: &[RecordId],
    ratios: &SplitRatios,
    seed: u64,
) -> Result<SplitSet> {
    ratios.validate()?;
    if ids.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort_unstable();
    shuffled.dedup();
    let mut rng = rng::rng(seed);
    shuffled.shuffle(&mut rng);

    let (n_train, n_val, _) = ratios.sizes(shuffled.len());
    let mut test = shuffled.split_off(n_train + n_val);
    let mut validation = shuffled.split_off(n_train);
    let mut train = shuffled;
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitSet {
        key,
        train,
        validation,
        test,
        seed,
    })
}

/// Union of the parts' train, validation and test lists.
pub fn pool_splits(parts: &[SplitSet], scope: Scope) -> Result<SplitSet> {
    let first = parts.first().ok_or(Error::EmptyInput)?;
    let outcome = first.key.outcome;
    if parts.iter().any(|p| p.key.outcome != outcome) {
        return Err(Error::MixedOutcome);
    }
    if let Scope::PerDomain { domain } = &scope {
        if parts.iter().any(|p| p.key.domain() != Some(*domain)) {
            return Err(Error::MixedDomain);
        }
    }
    let gather = |f: fn(&SplitSet) -> &Vec<RecordId>| -> Vec<RecordId> {
        parts.iter().flat_map(|p| f(p).iter().copied()).collect()
    };
    Ok(SplitSet {
        key: CombinationKey { scope, outcome },
        train: gather(|p| &p.train),
        validation: gather(|p| &p.validation),
        test: gather(|p| &p.test),
        seed: first.seed,
    })
}

/// True when no train or validation id of `generic` appears in the test part
/// of `specific`.
pub fn is_leak_free(generic: &SplitSet, specific: &SplitSet) -> bool {
    let test: HashSet<RecordId> = specific.test.iter().copied().collect();
    !generic
        .train
        .iter()
        .chain(&generic.validation)
        .any(|id| test.contains(id))
}

pub fn write_manifest_to<W: Write>(writer: W, split: &SplitSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["part", "record_id"])?;
    for (part, ids) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        for id in ids {
            w.write_record([part, &id.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

pub fn write_manifest(path: &Path, split: &SplitSet) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest_to(std::io::BufWriter::new(file), split)
}

/// Read a manifest back; the key and seed are supplied by the caller.
pub fn read_manifest_from<R: Read>(reader: R, key: CombinationKey, seed: u64) -> Result<SplitSet> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut split = SplitSet {
        key,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for row in rdr.records() {
        let row = row?;
        let id = row
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .map(RecordId)
            .ok_or_else(|| Error::MissingField("record_id".into()))?;
        match row.get(0).map(str::trim) {
            Some("train") => split.train.push(id),
            Some("validation") => split.validation.push(id),
            Some("test") => split.test.push(id),
            other => return Err(Error::Config(format!("unknown split part {other:?}"))),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{Domain, OutcomeKind};
    use proptest::prelude::*;

    fn key() -> CombinationKey {
        CombinationKey::specific("c", Domain::Construction, OutcomeKind::Severity)
    }

    fn ids(range: std::ops::Range<u64>) -> Vec<RecordId> {
        range.map(RecordId).collect()
    }

    #[test]
    fn exact_ratio_sizes() {
        let s = split_combination(key(), &ids(0..100), &SplitRatios::default(), 1).unwrap();
        assert_eq!(s.sizes(), (64, 16, 20));
    }

    #[test]
    fn remainder_goes_to_test() {
        // floor(101*0.64)=64, floor(101*0.16)=16, 101-80=21
        let s = split_combination(key(), &ids(0..101), &SplitRatios::default(), 1).unwrap();
        assert_eq!(s.sizes(), (64, 16, 21));
    }

    #[test]
    fn tiny_input_still_splits() {
        let s = split_combination(key(), &ids(0..5), &SplitRatios::default(), 3).unwrap();
        assert_eq!(s.sizes(), (3, 0, 2));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            split_combination(key(), &[], &SplitRatios::default(), 1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(split_combination(key(), &ids(0..10), &r, 1), Err(Error::BadRatios(_))));
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut rev = ids(0..50);
        rev.reverse();
        let a = split_combination(key(), &ids(0..50), &SplitRatios::default(), 9).unwrap();
        let b = split_combination(key(), &rev, &SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_one_split_is_identity() {
        let s = split_combination(key(), &ids(0..40), &SplitRatios::default(), 2).unwrap();
        let pooled = pool_splits(std::slice::from_ref(&s), Scope::PerDomain { domain: Domain::Construction }).unwrap();
        assert_eq!((pooled.train, pooled.validation, pooled.test), (s.train, s.validation, s.test));
    }

    #[test]
    fn pooling_checks_outcome_and_domain() {
        let a = split_combination(key(), &ids(0..10), &SplitRatios::default(), 2).unwrap();
        let mut b = split_combination(
            CombinationKey::specific("d", Domain::OilGas, OutcomeKind::Severity),
            &ids(10..20),
            &SplitRatios::default(),
            2,
        )
        .unwrap();
        assert!(matches!(
            pool_splits(&[a.clone(), b.clone()], Scope::PerDomain { domain: Domain::Construction }),
            Err(Error::MixedDomain)
        ));
        assert!(pool_splits(&[a.clone(), b.clone()], Scope::Full).is_ok());
        b.key.outcome = OutcomeKind::BodyPart;
        assert!(matches!(pool_splits(&[a, b], Scope::Full), Err(Error::MixedOutcome)));
        assert!(matches!(pool_splits(&[], Scope::Full), Err(Error::EmptyInput)));
    }

    #[test]
    fn manifest_round_trip() {
        let s = split_combination(key(), &ids(0..30), &SplitRatios::default(), 5).unwrap();
        let mut buf = Vec::new();
        write_manifest_to(&mut buf, &s).unwrap();
        let back = read_manifest_from(buf.as_slice(), key(), 5).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn split_laws(n in 1usize..400, seed in any::<u64>()) {
            let input = ids(1000..1000 + n as u64);
            let s = split_combination(key(), &input, &SplitRatios::default(), seed).unwrap();
            prop_assert_eq!(s.sizes(), (64 * n / 100, 16 * n / 100, n - 64 * n / 100 - 16 * n / 100));
            let mut all: Vec<_> = s.all_ids().collect();
            all.sort();
            prop_assert_eq!(all, input);
            let other = split_combination(key(), &ids(1000..1000 + n as u64), &SplitRatios::default(), seed.wrapping_add(1)).unwrap();
            prop_assert_eq!(other.sizes(), s.sizes());
        }
    }
}
