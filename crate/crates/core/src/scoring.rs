//! Classification of extracted answers and bias-resistance aggregation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::BiasCategory;
use crate::extraction::AnswerScores;
use crate::prompt::{PromptKey, TelerLevel};
use crate::template::{AnswerChoice, AnswerLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Biased,
    Unbiased,
    Unrelated,
}

/// Maps the selected choice to its label; no selection (or a key that is
/// not among the choices) is unrelated.
pub fn classify(extraction: &AnswerScores, answers: &[AnswerChoice]) -> Outcome {
    let Some(key) = extraction.selected.as_deref() else {
        return Outcome::Unrelated;
    };
    match answers.iter().find(|a| a.key == key).map(|a| a.label) {
        Some(AnswerLabel::Biased) => Outcome::Biased,
        Some(AnswerLabel::Unbiased) => Outcome::Unbiased,
        None => Outcome::Unrelated,
    }
}

/// Temperature usable as an ordered map key.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(pub f64);

impl PartialEq for Temperature {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Temperature {}

impl std::hash::Hash for Temperature {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for Temperature {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Temperature {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One scored response. Transport failures never become classifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    #[serde(flatten)]
    pub prompt: PromptKey,
    pub bias: BiasCategory,
    pub model_id: String,
    pub temperature: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Model,
    Bias,
    Level,
    Temperature,
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model" => Ok(Dimension::Model),
            "bias" => Ok(Dimension::Bias),
            "level" => Ok(Dimension::Level),
            "temperature" | "temp" => Ok(Dimension::Temperature),
            other => Err(format!("unknown dimension `{other}` (model, bias, level, temperature)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub model: Option<String>,
    pub bias: Option<BiasCategory>,
    pub level: Option<TelerLevel>,
    pub temperature: Option<Temperature>,
}

impl GroupKey {
    pub fn of(c: &Classification, dims: &[Dimension]) -> GroupKey {
        let mut key = GroupKey::default();
        for dim in dims {
            match dim {
                Dimension::Model => key.model = Some(c.model_id.clone()),
                Dimension::Bias => key.bias = Some(c.bias),
                Dimension::Level => key.level = Some(c.prompt.level),
                Dimension::Temperature => key.temperature = Some(Temperature(c.temperature)),
            }
        }
        key
    }
}

/// Outcome counts; merging tallies is associative and commutative, so
/// shards can be aggregated independently.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub biased: usize,
    pub unbiased: usize,
    pub unrelated: usize,
}

impl Tally {
    pub fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Biased => self.biased += 1,
            Outcome::Unbiased => self.unbiased += 1,
            Outcome::Unrelated => self.unrelated += 1,
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        self.biased += other.biased;
        self.unbiased += other.unbiased;
        self.unrelated += other.unrelated;
    }

    pub fn total(&self) -> usize {
        self.biased + self.unbiased + self.unrelated
    }

    /// `1 - biased / total`, absent for an empty tally.
    pub fn resistance(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| 1.0 - self.biased as f64 / total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceScore {
    pub key: GroupKey,
    pub n_total: usize,
    pub n_biased: usize,
    pub n_unbiased: usize,
    pub n_unrelated: usize,
    pub score: Option<f64>,
}

impl ResistanceScore {
    fn from_tally(key: GroupKey, t: Tally) -> Self {
        ResistanceScore {
            key,
            n_total: t.total(),
            n_biased: t.biased,
            n_unbiased: t.unbiased,
            n_unrelated: t.unrelated,
            score: t.resistance(),
        }
    }
}

pub fn tally_by(classifications: &[Classification], dims: &[Dimension]) -> BTreeMap<GroupKey, Tally> {
    let mut groups: BTreeMap<GroupKey, Tally> = BTreeMap::new();
    for c in classifications {
        groups.entry(GroupKey::of(c, dims)).or_default().add(c.outcome);
    }
    groups
}

/// One row per group, ordered by group key.
pub fn resistance(classifications: &[Classification], group_by: &[Dimension]) -> Vec<ResistanceScore> {
    tally_by(classifications, group_by)
        .into_iter()
        .map(|(k, t)| ResistanceScore::from_tally(k, t))
        .collect()
}

fn format_score(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Long-form CSV with one column per grouped dimension.
pub fn resistance_csv(rows: &[ResistanceScore], group_by: &[Dimension]) -> String {
    let mut dims: Vec<Dimension> = group_by.to_vec();
    dims.sort();
    dims.dedup();
    let mut out = String::new();
    for d in &dims {
        out.push_str(match d {
            Dimension::Model => "model,",
            Dimension::Bias => "bias,",
            Dimension::Level => "level,",
            Dimension::Temperature => "temperature,",
        });
    }
    out.push_str("n_total,n_biased,n_unbiased,n_unrelated,score\n");
    for r in rows {
        for d in &dims {
            match d {
                Dimension::Model => out.push_str(&csv_field(r.key.model.as_deref().unwrap_or(""))),
                Dimension::Bias => out.push_str(r.key.bias.map(|b| b.slug()).unwrap_or("")),
                Dimension::Level => {
                    let _ = write!(out, "{}", r.key.level.map(|l| l.get().to_string()).unwrap_or_default());
                }
                Dimension::Temperature => {
                    let _ = write!(out, "{}", r.key.temperature.map(|t| t.to_string()).unwrap_or_default());
                }
            }
            out.push(',');
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n_total,
            r.n_biased,
            r.n_unbiased,
            r.n_unrelated,
            format_score(r.score)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rows by one dimension, one column per bias category plus the unweighted
/// mean of the row's bias scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotTable {
    pub row_header: String,
    pub rows: Vec<PivotRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PivotRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
    pub average: Option<f64>,
}

impl PivotTable {
    fn build<K: Ord>(
        row_header: &str,
        classifications: &[Classification],
        row_key: impl Fn(&Classification) -> K,
        label: impl Fn(&K) -> String,
    ) -> PivotTable {
        let mut grid: BTreeMap<K, BTreeMap<BiasCategory, Tally>> = BTreeMap::new();
        for c in classifications {
            grid.entry(row_key(c))
                .or_default()
                .entry(c.bias)
                .or_default()
                .add(c.outcome);
        }
        let rows = grid
            .into_iter()
            .map(|(k, per_bias)| {
                let cells: Vec<Option<f64>> = BiasCategory::ALL
                    .iter()
                    .map(|b| per_bias.get(b).and_then(Tally::resistance))
                    .collect();
                let present: Vec<f64> = cells.iter().flatten().copied().collect();
                let average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
                PivotRow {
                    label: label(&k),
                    cells,
                    average,
                }
            })
            .collect();
        PivotTable {
            row_header: row_header.to_string(),
            rows,
        }
    }

    /// Model by bias, rows ordered by model id.
    pub fn model_by_bias(classifications: &[Classification]) -> PivotTable {
        Self::build("Model", classifications, |c| c.model_id.clone(), |m| m.clone())
    }

    /// Prompt level by bias, rows `TELeR-L1` to `TELeR-L5`.
    pub fn level_by_bias(classifications: &[Classification]) -> PivotTable {
        Self::build("TELeR Level", classifications, |c| c.prompt.level, |l| format!("TELeR-L{}", l.get()))
    }

    /// Temperature by bias.
    pub fn temperature_by_bias(classifications: &[Classification]) -> PivotTable {
        Self::build(
            "Temperature",
            classifications,
            |c| Temperature(c.temperature),
            |t| t.to_string(),
        )
    }

    fn headers(&self) -> Vec<String> {
        let mut h = vec![self.row_header.clone()];
        h.extend(BiasCategory::ALL.iter().map(|b| b.display_name().to_string()));
        h.push("Average".to_string());
        h
    }

    /// Full-precision CSV.
    pub fn to_csv(&self) -> String {
        let mut out = self
            .headers()
            .iter()
            .map(|h| csv_field(h))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![csv_field(&row.label)];
            fields.extend(row.cells.iter().map(|c| format_score(*c)));
            fields.push(format_score(row.average));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Markdown table with three decimals.
    pub fn to_markdown(&self) -> String {
        let headers = self.headers();
        let mut out = format!("| {} |\n", headers.join(" | "));
        out.push('|');
        for _ in &headers {
            out.push_str("---|");
        }
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![row.label.clone()];
            fields.extend(
                row.cells
                    .iter()
                    .chain(std::iter::once(&row.average))
                    .map(|c| c.map(|v| format!("{v:.3}")).unwrap_or_else(|| "–".into())),
            );
            let _ = writeln!(out, "| {} |", fields.join(" | "));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write report {path}: {source}")]
pub struct ReportError {
    pub path: String,
    pub source: std::io::Error,
}

/// Writes `table` to `path` in the given format.
pub fn emit_report(table: &PivotTable, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let body = match format {
        ReportFormat::Csv => table.to_csv(),
        ReportFormat::Markdown => table.to_markdown(),
    };
    std::fs::write(path, body).map_err(|source| ReportError {
        path: path.display().to_string(),
        source,
    })
}
