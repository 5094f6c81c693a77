//! Report tables as CSV (full precision) and markdown (2 decimals).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EvaluationReport, RowStatus};
use crate::error::{Error, Result};
use crate::records::{CombinationKey, OutcomeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Empty,
}

impl Cell {
    fn raw(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => x.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn rounded(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.2}"),
            other => other.raw(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, headers: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::raw))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: String| s.replace('|', "\\|");
        let mut out = format!("| {} |\n", self.headers.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.headers.len())));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| esc(c.rounded())).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }
}

fn key_cells(key: &CombinationKey) -> [Cell; 4] {
    [
        key.slug().into(),
        key.company().map(str::to_string).into(),
        key.domain().map(|d| d.as_str()).into(),
        key.outcome.as_str().into(),
    ]
}

pub fn report_tables(report: &EvaluationReport) -> Vec<Table> {
    let mut scores = Table::new(
        "scores",
        &[
            "key", "company", "domain", "outcome", "model_kind", "family", "selected", "status", "macro_f1",
            "weighted_f1", "n_categories", "a", "b", "gain", "model_artifact", "split_manifest",
        ],
    );
    let mut per_category = Table::new(
        "per_category",
        &["key", "model_kind", "family", "category", "precision", "recall", "f1", "support"],
    );
    for r in &report.rows {
        let mut row: Vec<Cell> = key_cells(&r.key).into();
        row.extend([
            r.kind.as_str().into(),
            r.family_label().into(),
            r.selected.clone().into(),
            r.status.label().into(),
            r.scores.as_ref().map(|s| s.macro_f1).into(),
            r.scores.as_ref().map(|s| s.weighted_f1).into(),
            r.n_categories.map(|n| n.to_string()).into(),
            r.coefficients.map(|c| c.a).into(),
            r.coefficients.map(|c| c.b).into(),
            r.gain.into(),
            r.model_artifact.clone().into(),
            r.split_manifest.clone().into(),
        ]);
        scores.rows.push(row);
        if let Some(s) = &r.scores {
            for c in &s.per_category {
                per_category.rows.push(vec![
                    r.key.slug().into(),
                    r.kind.as_str().into(),
                    r.family_label().into(),
                    c.category.clone().into(),
                    c.precision.into(),
                    c.recall.into(),
                    c.f1.into(),
                    c.support.to_string().into(),
                ]);
            }
        }
    }

    let mut gains = Table::new("gains", &["key", "company", "domain", "outcome", "best_kind", "best_family", "gain"]);
    for g in &report.key_gains {
        let mut row: Vec<Cell> = key_cells(&g.key).into();
        row.extend([g.kind.as_str().into(), g.family.clone().into(), g.gain.into()]);
        gains.rows.push(row);
    }

    let mut summary = Table::new("summary", &["statistic", "value"]);
    let mut stat = |name: String, v: Cell| summary.rows.push(vec![name.into(), v]);
    stat("keys".into(), report.key_gains.len().to_string().into());
    stat("win_rate".into(), report.win_rate().into());
    let pos = report.positive_gain_summary();
    stat("positive_gains".into(), pos.map_or(0, |p| p.n).to_string().into());
    stat("min_gain".into(), pos.map(|p| p.min).into());
    stat("max_gain".into(), pos.map(|p| p.max).into());
    stat("mean_gain".into(), pos.map(|p| p.mean).into());
    for k in &report.kind_summaries {
        let kind = k.kind.as_str();
        stat(format!("{kind}_keys"), k.n.to_string().into());
        stat(format!("{kind}_mean_gain"), k.mean_gain.into());
        stat(format!("{kind}_win_rate"), k.win_rate.into());
        stat(format!("{kind}_extra_categories"), k.mean_extra_categories.into());
    }

    vec![scores, per_category, gains, summary]
}

/// Per-outcome pivots: model rows by company columns, macro-F1 in points
/// plus `#categories` rows.
pub fn company_tables(report: &EvaluationReport) -> Vec<(OutcomeKind, Table)> {
    let mut by_outcome: BTreeMap<OutcomeKind, Vec<&super::ScoreRow>> = BTreeMap::new();
    for r in &report.rows {
        by_outcome.entry(r.key.outcome).or_default().push(r);
    }
    by_outcome
        .into_iter()
        .map(|(outcome, rows)| {
            let mut keys: Vec<&CombinationKey> = rows.iter().map(|r| &r.key).collect();
            keys.dedup();
            let mut models: Vec<(super::ModelKind, String)> = Vec::new();
            for r in &rows {
                let m = (r.kind, r.family_label().to_string());
                if !models.contains(&m) {
                    models.push(m);
                }
            }
            let mut headers = vec!["model".to_string()];
            headers.extend(keys.iter().map(|k| {
                format!("{} ({})", k.company().unwrap_or("-"), k.domain().map_or("-", |d| d.as_str()))
            }));
            let find = |k: &CombinationKey, m: &(super::ModelKind, String)| {
                rows.iter().find(|r| &r.key == k && r.kind == m.0 && r.family_label() == m.1)
            };
            let mut table = Table {
                name: format!("companies_{}", outcome.as_str()),
                headers,
                rows: Vec::new(),
            };
            for m in &models {
                let mut row: Vec<Cell> = vec![format!("{} {}", m.0.as_str(), m.1).into()];
                row.extend(keys.iter().map(|k| match find(k, m) {
                    Some(r) if r.status == RowStatus::NotStackable => "not stackable".into(),
                    Some(r) => r.macro_f1().map(|x| 100.0 * x).into(),
                    None => Cell::Empty,
                }));
                table.rows.push(row);
            }
            for m in &models {
                let mut row: Vec<Cell> = vec![format!("#categories {} {}", m.0.as_str(), m.1).into()];
                row.extend(
                    keys.iter()
                        .map(|k| find(k, m).and_then(|r| r.n_categories).map(|n| n.to_string()).into()),
                );
                table.rows.push(row);
            }
            (outcome, table)
        })
        .collect()
}

/// Writes every report table into `dir`; returns the written paths.
pub fn emit_report(report: &EvaluationReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = report_tables(report);
    if format == ReportFormat::Markdown {
        tables.extend(company_tables(report).into_iter().map(|(_, t)| t));
    }
    tables
        .iter()
        .map(|t| {
            let (path, text) = match format {
                ReportFormat::Csv => (dir.join(format!("{}.csv", t.name)), t.to_csv()?),
                ReportFormat::Markdown => (dir.join(format!("{}.md", t.name)), t.to_markdown()),
            };
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn write_report_json(report: &EvaluationReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_rounds_numbers_only() {
        let mut t = Table::new("t", &["a", "b"]);
        t.rows.push(vec!["x|y".into(), 0.123456.into()]);
        t.rows.push(vec![Cell::Empty, 15.3.into()]);
        assert_eq!(t.to_markdown(), "| a | b |\n|---|---|\n| x\\|y | 0.12 |\n|  | 15.30 |\n");
        assert_eq!(t.to_csv().unwrap(), "a,b\nx|y,0.123456\n,15.3\n");
    }
}
