//! Accident records, outcome taxonomy and modeling-task keys.

mod config;
mod csv_io;
mod eligibility;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{Lexicon, Taxonomy};
pub use csv_io::{
    header_lexicon, header_lexicon_from, read_pool, read_pool_from, record_to_fields, write_pool, write_pool_to,
};
pub use eligibility::{
    eligible_combinations, eligible_combinations_with, specific_training_keys, EligibilityRule,
};

/// The five prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Severity,
    BodyPart,
    InjuryType,
    AccidentType,
    EnergySource,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 5] = [
        OutcomeKind::Severity,
        OutcomeKind::BodyPart,
        OutcomeKind::InjuryType,
        OutcomeKind::AccidentType,
        OutcomeKind::EnergySource,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Severity => "severity",
            OutcomeKind::BodyPart => "body_part",
            OutcomeKind::InjuryType => "injury_type",
            OutcomeKind::AccidentType => "accident_type",
            OutcomeKind::EnergySource => "energy_source",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutcomeKind::ALL
            .into_iter()
            .find(|o| o.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown outcome {s:?}")))
    }
}

/// Industry sector of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Construction,
    ElectricTd,
    OilGas,
    Corporate,
}

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::Construction,
        Domain::ElectricTd,
        Domain::OilGas,
        Domain::Corporate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Construction => "construction",
            Domain::ElectricTd => "electric_td",
            Domain::OilGas => "oil_gas",
            Domain::Corporate => "corporate",
        }
    }

    /// Corporate records feed the full pool but never get their own
    /// specific or per-domain model.
    pub fn trains_own_models(self) -> bool {
        self != Domain::Corporate
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase();
        let d = match norm.as_str() {
            "construction" | "constr" => Domain::Construction,
            "electric_td" | "electric t&d" | "elec" | "electric" => Domain::ElectricTd,
            "oil_gas" | "oil & gas" | "oilgas" => Domain::OilGas,
            "corporate" | "corp" => Domain::Corporate,
            _ => return Err(Error::UnknownDomain(s.to_string())),
        };
        Ok(d)
    }
}

/// Opaque stable identity assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One binary flag per lexicon attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeVector(Vec<bool>);

impl AttributeVector {
    pub fn new(flags: Vec<bool>) -> Self {
        AttributeVector(flags)
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        AttributeVector(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentRecord {
    pub id: RecordId,
    pub company: String,
    pub domain: Domain,
    pub attributes: AttributeVector,
    pub outcomes: BTreeMap<OutcomeKind, String>,
}

impl AccidentRecord {
    pub fn label(&self, outcome: OutcomeKind) -> Option<&str> {
        self.outcomes.get(&outcome).map(String::as_str)
    }
}

/// Which records a model is trained on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scope {
    Specific { company: String, domain: Domain },
    PerDomain { domain: Domain },
    Full,
}

/// A modeling task: a scope plus the outcome being predicted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CombinationKey {
    pub scope: Scope,
    pub outcome: OutcomeKind,
}

impl CombinationKey {
    pub fn specific(company: impl Into<String>, domain: Domain, outcome: OutcomeKind) -> Self {
        CombinationKey {
            scope: Scope::Specific {
                company: company.into(),
                domain,
            },
            outcome,
        }
    }

    pub fn per_domain(domain: Domain, outcome: OutcomeKind) -> Self {
        CombinationKey {
            scope: Scope::PerDomain { domain },
            outcome,
        }
    }

    pub fn full(outcome: OutcomeKind) -> Self {
        CombinationKey {
            scope: Scope::Full,
            outcome,
        }
    }

    pub fn domain(&self) -> Option<Domain> {
        match &self.scope {
            Scope::Specific { domain, .. } | Scope::PerDomain { domain } => Some(*domain),
            Scope::Full => None,
        }
    }

    pub fn company(&self) -> Option<&str> {
        match &self.scope {
            Scope::Specific { company, .. } => Some(company),
            _ => None,
        }
    }

    /// Filesystem-safe label, also used to derive per-task seeds.
    pub fn slug(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                .collect()
        };
        match &self.scope {
            Scope::Specific { company, domain } => {
                format!("spec__{}__{}__{}", clean(company), domain, self.outcome)
            }
            Scope::PerDomain { domain } => format!("dom__{}__{}", domain, self.outcome),
            Scope::Full => format!("full__{}", self.outcome),
        }
    }
}

impl fmt::Display for CombinationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.scope {
            Scope::Specific { company, domain } => {
                write!(f, "{company}/{domain}/{}", self.outcome)
            }
            Scope::PerDomain { domain } => write!(f, "domain:{domain}/{}", self.outcome),
            Scope::Full => write!(f, "full/{}", self.outcome),
        }
    }
}

/// Per-category tallies for one outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts(BTreeMap<String, u64>);

impl CategoryCounts {
    pub fn new() -> Self {
        CategoryCounts::default()
    }

    pub fn add(&mut self, category: &str, n: u64) {
        if n > 0 {
            *self.0.entry(category.to_string()).or_default() += n;
        }
    }

    pub fn get(&self, category: &str) -> u64 {
        self.0.get(category).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Categories in canonical (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn categories(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }

    pub fn merged(&self, other: &CategoryCounts) -> CategoryCounts {
        let mut out = self.clone();
        for (c, n) in other.iter() {
            out.add(c, n);
        }
        out
    }
}

impl<S: AsRef<str>> FromIterator<(S, u64)> for CategoryCounts {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut counts = CategoryCounts::new();
        for (c, n) in iter {
            counts.add(c.as_ref(), n);
        }
        counts
    }
}

/// Tally `outcome` labels over records that carry it.
pub fn category_counts<'a>(
    records: impl IntoIterator<Item = &'a AccidentRecord>,
    outcome: OutcomeKind,
) -> CategoryCounts {
    let mut counts = CategoryCounts::new();
    for r in records {
        if let Some(label) = r.label(outcome) {
            counts.add(label, 1);
        }
    }
    counts
}

/// Raw string fields of one ingested row, keyed by column name.
pub type RawRecord = HashMap<String, String>;

fn parse_flag(raw: &str, index: usize) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Ok(true),
        "0" | "0.0" | "false" | "no" => Ok(false),
        _ => Err(Error::BadAttributeValue { index }),
    }
}

/// Check a raw row against the lexicon and taxonomy and normalize it.
///
/// A missing `id` field yields `RecordId(0)`; CSV ingestion fills in row
/// numbers before calling this.
pub fn validate_record(raw: &RawRecord, lexicon: &Lexicon, taxonomy: &Taxonomy) -> Result<AccidentRecord> {
    let field = |name: &str| -> Result<&str> {
        raw.get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingField(name.to_string()))
    };

    let id = match raw.get("id") {
        Some(s) => RecordId(
            s.trim()
                .parse()
                .map_err(|_| Error::MissingField("id".to_string()))?,
        ),
        None => RecordId(0),
    };
    let company = field("company")?.trim().to_string();
    if company.is_empty() {
        return Err(Error::MissingField("company".to_string()));
    }
    let domain: Domain = field("domain")?.parse()?;

    let mut flags = Vec::with_capacity(lexicon.len());
    for (index, name) in lexicon.names().iter().enumerate() {
        flags.push(parse_flag(field(name)?, index)?);
    }

    let mut outcomes = BTreeMap::new();
    for outcome in OutcomeKind::ALL {
        let Some(label) = raw.get(outcome.as_str()) else {
            continue;
        };
        let label = label.trim();
        if label.is_empty() {
            continue;
        }
        let canonical = taxonomy
            .canonical(outcome, label)
            .ok_or_else(|| Error::UnknownCategory {
                outcome,
                label: label.to_string(),
            })?;
        outcomes.insert(outcome, canonical.to_string());
    }
    if outcomes.is_empty() {
        return Err(Error::NoOutcome);
    }

    Ok(AccidentRecord {
        id,
        company,
        domain,
        attributes: AttributeVector(flags),
        outcomes,
    })
}

/// Records indexed by id.
#[derive(Debug, Clone, Default)]
pub struct RecordPool {
    records: Vec<AccidentRecord>,
    index: HashMap<RecordId, usize>,
}

impl RecordPool {
    pub fn new(records: Vec<AccidentRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(Error::DuplicateRecordId(r.id.0));
            }
        }
        Ok(RecordPool { records, index })
    }

    pub fn records(&self) -> &[AccidentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: RecordId) -> Option<&AccidentRecord> {
        self.index.get(&id).map(|&i| &self.records[i])
    }

    /// Resolve ids, skipping unknown ones.
    pub fn resolve<'a>(&'a self, ids: &'a [RecordId]) -> impl Iterator<Item = &'a AccidentRecord> + 'a {
        ids.iter().filter_map(move |&id| self.get(id))
    }

    /// Records belonging to one (company, domain) cell that carry `outcome`.
    pub fn combination(&self, company: &str, domain: Domain, outcome: OutcomeKind) -> Vec<&AccidentRecord> {
        self.records
            .iter()
            .filter(|r| r.company == company && r.domain == domain && r.label(outcome).is_some())
            .collect()
    }
}
