use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::OutcomeKind;
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");
const DEFAULT_TAXONOMY: &str = include_str!("../../data/taxonomy.toml");

/// Ordered attribute names; position `i` is flag `i` of every vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    names: Vec<String>,
}

impl Lexicon {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("bad or duplicate attribute name {n:?}")));
            }
            if is_reserved_column(n) {
                return Err(Error::Config(format!("attribute name {n:?} clashes with a column")));
            }
        }
        if names.is_empty() {
            return Err(Error::Config("empty lexicon".into()));
        }
        Ok(Lexicon { names })
    }

    /// One attribute per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Lexicon::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text)
    }

    /// The attribute columns of a pool header, in column order.
    pub fn from_header<S: AsRef<str>>(columns: &[S]) -> Result<Self> {
        Lexicon::new(
            columns
                .iter()
                .map(|c| c.as_ref().trim())
                .filter(|c| !is_reserved_column(c))
                .map(str::to_string)
                .collect(),
        )
    }

    /// Generic `attr_1..attr_n` names, for synthetic pools.
    pub fn numbered(n: usize) -> Self {
        Lexicon {
            names: (1..=n).map(|i| format!("attr_{i}")).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

fn is_reserved_column(name: &str) -> bool {
    matches!(name, "id" | "company" | "domain") || OutcomeKind::ALL.iter().any(|o| o.as_str() == name)
}

/// Allowed categories per outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    categories: BTreeMap<OutcomeKind, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    severity: Vec<String>,
    body_part: Vec<String>,
    injury_type: Vec<String>,
    accident_type: Vec<String>,
    energy_source: Vec<String>,
}

impl Taxonomy {
    pub fn new(categories: BTreeMap<OutcomeKind, Vec<String>>) -> Result<Self> {
        for outcome in OutcomeKind::ALL {
            let list = categories
                .get(&outcome)
                .ok_or_else(|| Error::Config(format!("taxonomy lacks outcome {outcome}")))?;
            let mut seen = HashSet::new();
            for c in list {
                if c.trim().is_empty() || !seen.insert(c.to_ascii_lowercase()) {
                    return Err(Error::Config(format!("bad or duplicate category {c:?} for {outcome}")));
                }
            }
        }
        Ok(Taxonomy { categories })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: TaxonomyFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Taxonomy::new(BTreeMap::from([
            (OutcomeKind::Severity, file.severity),
            (OutcomeKind::BodyPart, file.body_part),
            (OutcomeKind::InjuryType, file.injury_type),
            (OutcomeKind::AccidentType, file.accident_type),
            (OutcomeKind::EnergySource, file.energy_source),
        ]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Taxonomy::parse(&text)
    }

    pub fn categories(&self, outcome: OutcomeKind) -> &[String] {
        &self.categories[&outcome]
    }

    /// Case-insensitive lookup returning the taxonomy's spelling.
    pub fn canonical(&self, outcome: OutcomeKind, label: &str) -> Option<&str> {
        self.categories(outcome)
            .iter()
            .find(|c| c.eq_ignore_ascii_case(label))
            .map(String::as_str)
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::parse(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_has_92_attributes() {
        let lex = Lexicon::default();
        assert_eq!(lex.len(), 92);
        assert_eq!(lex.names()[0], "adverse low temps");
        assert!(lex.names().iter().any(|n| n == "LOTO/labeling"));
    }

    #[test]
    fn bundled_taxonomy_matches_category_table() {
        let t = Taxonomy::default();
        let sizes: Vec<usize> = OutcomeKind::ALL.iter().map(|&o| t.categories(o).len()).collect();
        assert_eq!(sizes, vec![5, 7, 11, 11, 9]);
        assert_eq!(
            t.categories(OutcomeKind::Severity),
            &["first aid", "report-only", "lost time", "medical", "recordable"]
        );
        assert_eq!(t.canonical(OutcomeKind::AccidentType, "ppe"), Some("PPE"));
        assert_eq!(t.canonical(OutcomeKind::Severity, "near miss"), None);
    }

    #[test]
    fn lexicon_rejects_duplicates_and_reserved_names() {
        assert!(Lexicon::parse("a\nb\na\n").is_err());
        assert!(Lexicon::parse("a\nseverity\n").is_err());
        assert!(Lexicon::parse("# only comments\n").is_err());
    }

    #[test]
    fn taxonomy_requires_every_outcome() {
        assert!(Taxonomy::parse("severity = [\"a\", \"b\"]").is_err());
    }
}
