use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccidentRecord, CategoryCounts, CombinationKey, Domain, OutcomeKind};

/// A combination is modeled when at least `min_categories` categories each
/// have strictly more than `min_count` records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EligibilityRule {
    pub min_categories: usize,
    pub min_count: u64,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        EligibilityRule {
            min_categories: 2,
            min_count: 100,
        }
    }
}

impl EligibilityRule {
    pub fn is_eligible(&self, counts: &CategoryCounts) -> bool {
        counts.iter().filter(|&(_, n)| n > self.min_count).count() >= self.min_categories
    }
}

/// Every eligible (company, domain, outcome) key, corporate included, in
/// (company, domain, outcome) order.
pub fn eligible_combinations(pool: &[AccidentRecord]) -> Vec<CombinationKey> {
    eligible_combinations_with(pool, &EligibilityRule::default())
}

pub fn eligible_combinations_with(pool: &[AccidentRecord], rule: &EligibilityRule) -> Vec<CombinationKey> {
    let mut cells: BTreeMap<(&str, Domain, OutcomeKind), CategoryCounts> = BTreeMap::new();
    for r in pool {
        for (&outcome, label) in &r.outcomes {
            cells
                .entry((r.company.as_str(), r.domain, outcome))
                .or_default()
                .add(label, 1);
        }
    }
    cells
        .into_iter()
        .filter(|(_, counts)| rule.is_eligible(counts))
        .map(|((company, domain, outcome), _)| CombinationKey::specific(company, domain, outcome))
        .collect()
}

/// The eligible keys that get a specific model (corporate excluded).
pub fn specific_training_keys(eligible: &[CombinationKey]) -> Vec<CombinationKey> {
    eligible
        .iter()
        .filter(|k| k.domain().is_some_and(Domain::trains_own_models))
        .cloned()
        .collect()
}
