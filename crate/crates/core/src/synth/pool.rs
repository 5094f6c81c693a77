//! Multi-company record pools drawn from latent attribute-to-outcome rules.
//!
//! Attributes are independent Bernoulli flags. The first `n_informative`
//! flags form a pattern that a rule table maps to a category; the remaining
//! flags are noise. With probability `noise` a record's label is replaced by
//! a uniformly drawn category. Under the shared regime all companies use one
//! table; under the disjoint regime each company draws its own.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{AccidentRecord, AttributeVector, Domain, OutcomeKind, RecordId, Taxonomy};
use crate::rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleRegime {
    #[default]
    Shared,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanySpec {
    pub name: String,
    pub domain: Domain,
    pub n: usize,
    /// Probability of replacing the rule's label with a random category.
    #[serde(default)]
    pub noise: f64,
}

fn default_n_attributes() -> usize {
    12
}

fn default_n_informative() -> usize {
    4
}

fn default_density() -> f64 {
    0.3
}

fn default_skew() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    #[serde(default)]
    pub seed: u64,
    pub outcome: OutcomeKind,
    /// Category labels; defaults to the outcome's full taxonomy list.
    #[serde(default)]
    pub categories: Option<Vec<String>>,
    #[serde(default = "default_n_attributes")]
    pub n_attributes: usize,
    #[serde(default = "default_n_informative")]
    pub n_informative: usize,
    /// Probability that any attribute flag is set.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Rule tables give category `i` a prior weight of `(i + 1)^-skew`.
    #[serde(default = "default_skew")]
    pub skew: f64,
    #[serde(default)]
    pub regime: RuleRegime,
    /// Explicit rule table: category index for each of the `2^n_informative`
    /// patterns (bit `j` = informative attribute `j`). Drawn when absent.
    #[serde(default)]
    pub rules: Option<Vec<usize>>,
    pub companies: Vec<CompanySpec>,
}

impl PoolSpec {
    pub fn categories(&self, taxonomy: &Taxonomy) -> Vec<String> {
        self.categories
            .clone()
            .unwrap_or_else(|| taxonomy.categories(self.outcome).to_vec())
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        let bad = |m: String| Err(Error::InconsistentRules(m));
        let cats = self.categories(taxonomy);
        if cats.len() < 2 {
            return bad("at least two categories are needed".into());
        }
        if cats.iter().collect::<BTreeSet<_>>().len() != cats.len() {
            return bad("duplicate category".into());
        }
        if let Some(c) = cats.iter().find(|c| taxonomy.canonical(self.outcome, c) != Some(c.as_str())) {
            return bad(format!("{c:?} is not a {} category", self.outcome));
        }
        if self.n_informative == 0 || self.n_informative > self.n_attributes || self.n_informative > 16 {
            return bad(format!(
                "n_informative must be in 1..={} (got {})",
                self.n_attributes.min(16),
                self.n_informative
            ));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return bad("density must lie in (0, 1)".into());
        }
        if !self.skew.is_finite() {
            return bad("skew must be finite".into());
        }
        let patterns = 1usize << self.n_informative;
        match &self.rules {
            Some(r) if r.len() != patterns => {
                return bad(format!("rule table has {} entries for {patterns} patterns", r.len()));
            }
            Some(r) if r.iter().any(|&c| c >= cats.len()) => {
                return bad("rule table refers to an unknown category".into());
            }
            None if patterns < cats.len() => {
                return bad(format!("{patterns} patterns cannot cover {} categories", cats.len()));
            }
            _ => {}
        }
        if self.companies.is_empty() {
            return bad("no companies".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.companies {
            if !seen.insert((&c.name, c.domain)) {
                return bad(format!("company {} listed twice in {}", c.name, c.domain));
            }
            if !(0.0..1.0).contains(&c.noise) {
                return bad(format!("noise for {} must lie in [0, 1)", c.name));
            }
        }
        Ok(())
    }

    pub fn total_records(&self) -> usize {
        self.companies.iter().map(|c| c.n).sum()
    }
}

/// A random rule table in which every category owns at least one pattern.
fn draw_rules(patterns: usize, k: usize, skew: f64, rng: &mut rng::Rng) -> Vec<usize> {
    let prior: Vec<f64> = (0..k).map(|i| ((i + 1) as f64).powf(-skew)).collect();
    let dist = WeightedIndex::new(&prior).expect("positive prior");
    let mut order: Vec<usize> = (0..patterns).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut table = vec![0; patterns];
    for (i, &p) in order.iter().enumerate() {
        table[p] = if i < k { i } else { dist.sample(rng) };
    }
    table
}

pub fn generate_pool(spec: &PoolSpec, taxonomy: &Taxonomy) -> Result<Vec<AccidentRecord>> {
    spec.validate(taxonomy)?;
    let cats = spec.categories(taxonomy);
    let k = cats.len();
    let patterns = 1usize << spec.n_informative;
    let shared = match &spec.rules {
        Some(r) => r.clone(),
        None => draw_rules(patterns, k, spec.skew, &mut rng::rng(rng::derive_str(spec.seed, "rules"))),
    };

    let mut records = Vec::with_capacity(spec.total_records());
    let mut next_id = 1u64;
    for (ci, company) in spec.companies.iter().enumerate() {
        let company_seed = rng::derive(spec.seed, ci as u64 + 1);
        let own;
        let table = match (spec.regime, &spec.rules) {
            (RuleRegime::Disjoint, None) => {
                own = draw_rules(patterns, k, spec.skew, &mut rng::rng(rng::derive_str(company_seed, "rules")));
                &own
            }
            _ => &shared,
        };
        let mut rng = rng::rng(company_seed);
        for _ in 0..company.n {
            let flags: Vec<bool> = (0..spec.n_attributes).map(|_| rng.random_bool(spec.density)).collect();
            let pattern = (0..spec.n_informative).fold(0usize, |acc, j| acc | (flags[j] as usize) << j);
            let mut label = table[pattern];
            if company.noise > 0.0 && rng.random_bool(company.noise) {
                label = rng.random_range(0..k);
            }
            records.push(AccidentRecord {
                id: RecordId(next_id),
                company: company.name.clone(),
                domain: company.domain,
                attributes: AttributeVector::new(flags),
                outcomes: [(spec.outcome, cats[label].clone())].into_iter().collect(),
            });
            next_id += 1;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PoolSpec {
        PoolSpec {
            seed: 3,
            outcome: OutcomeKind::Severity,
            categories: None,
            n_attributes: 8,
            n_informative: 3,
            density: 0.4,
            skew: 1.0,
            regime: RuleRegime::Shared,
            rules: None,
            companies: vec![
                CompanySpec { name: "a".into(), domain: Domain::Construction, n: 30, noise: 0.0 },
                CompanySpec { name: "b".into(), domain: Domain::OilGas, n: 50, noise: 0.1 },
            ],
        }
    }

    #[test]
    fn counts_and_ids() {
        let r = generate_pool(&spec(), &Taxonomy::default()).unwrap();
        assert_eq!(r.len(), 80);
        assert_eq!(r.iter().filter(|x| x.company == "a").count(), 30);
        assert!(r.iter().enumerate().all(|(i, x)| x.id == RecordId(i as u64 + 1)));
    }

    #[test]
    fn rules_cover_categories() {
        let mut g = rng::rng(1);
        let t = draw_rules(8, 5, 1.0, &mut g);
        assert_eq!(t.iter().collect::<BTreeSet<_>>().len(), 5);
    }

    #[test]
    fn inconsistent_specs() {
        let tax = Taxonomy::default();
        let mut s = spec();
        s.rules = Some(vec![0; 7]);
        assert!(matches!(generate_pool(&s, &tax), Err(Error::InconsistentRules(_))));
        let mut s = spec();
        s.n_informative = 2; // 4 patterns, 5 categories
        assert!(generate_pool(&s, &tax).is_err());
        let mut s = spec();
        s.companies[0].noise = 1.0;
        assert!(generate_pool(&s, &tax).is_err());
        let mut s = spec();
        s.categories = Some(vec!["near miss".into(), "first aid".into()]);
        assert!(generate_pool(&s, &tax).is_err());
    }
}
