//! Run reports and their JSON, CSV and markdown renderings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::spec::ExperimentSpec;

/// Column order of every metrics CSV.
pub const CSV_COLUMNS: [&str; 6] = ["seed", "dataset", "model", "mse", "mae", "n_windows"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub model: String,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    /// Kind-specific per-seed records (training summaries, statistics).
    #[serde(default)]
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub engine_version: String,
    /// SHA-256 of the canonical spec JSON.
    pub config_hash: String,
    pub spec: ExperimentSpec,
    pub per_seed: Vec<SeedResult>,
    /// Arithmetic mean over seeds of each `(dataset, model)` row.
    pub averaged: Vec<MetricRow>,
    pub summary: Value,
    /// Paths relative to the run directory.
    pub checkpoints: Vec<String>,
    pub artifacts: Vec<String>,
}

/// Means of each `(dataset, model)` pair across seeds, in first-seen order.
pub fn average_rows(per_seed: &[SeedResult]) -> Vec<MetricRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in per_seed.iter().flat_map(|s| &s.rows) {
        let k = (r.dataset.clone(), r.model.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, model)| {
            let hits: Vec<&MetricRow> = per_seed
                .iter()
                .flat_map(|s| &s.rows)
                .filter(|r| r.dataset == dataset && r.model == model)
                .collect();
            let n = hits.len() as f64;
            MetricRow {
                mse: hits.iter().map(|r| r.mse).sum::<f64>() / n,
                mae: hits.iter().map(|r| r.mae).sum::<f64>() / n,
                n_windows: hits[0].n_windows,
                dataset,
                model,
            }
        })
        .collect()
}

impl RunReport {
    pub fn load(run_dir: &Path) -> CliResult<RunReport> {
        let path = run_dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn row(&self, dataset: &str, model: &str) -> Option<&MetricRow> {
        self.averaged.iter().find(|r| r.dataset == dataset && r.model == model)
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-seed rows followed by the averaged rows with seed `mean`.
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS)?;
        let mut put = |seed: String, r: &MetricRow| {
            w.write_record([
                seed,
                r.dataset.clone(),
                r.model.clone(),
                format!("{:?}", r.mse),
                format!("{:?}", r.mae),
                r.n_windows.to_string(),
            ])
        };
        for s in &self.per_seed {
            for r in &s.rows {
                put(s.seed.to_string(), r)?;
            }
        }
        for r in &self.averaged {
            put("mean".into(), r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Report(e.to_string()))
    }

    /// The averaged metrics table, or the summary as a JSON block when the
    /// run has no metric rows.
    pub fn to_markdown(&self) -> String {
        let body = if self.averaged.is_empty() {
            let json = serde_json::to_string_pretty(&self.summary).unwrap_or_default();
            format!("```json\n{json}\n```\n")
        } else {
            markdown_table(&self.averaged)
        };
        format!("## {} ({})\n\n{}", self.spec.name, self.spec.kind.name(), body)
    }
}

/// One row per dataset and metric, one column per model; the smallest value
/// of each row is bold.
pub fn markdown_table(rows: &[MetricRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut out = format!("| dataset | metric | {} |\n", models.join(" | "));
    out += &format!("|---|---|{}\n", "---|".repeat(models.len()));
    for d in &datasets {
        for (metric, get) in [("MSE", (|r: &MetricRow| r.mse) as fn(&MetricRow) -> f64), ("MAE", |r| r.mae)] {
            let vals: Vec<Option<f64>> = models
                .iter()
                .map(|m| rows.iter().find(|r| r.dataset == *d && r.model == *m).map(get))
                .collect();
            let best = vals.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let cells: Vec<String> = vals
                .iter()
                .map(|v| match v {
                    Some(v) if *v == best => format!("**{v:.3}**"),
                    Some(v) => format!("{v:.3}"),
                    None => "-".into(),
                })
                .collect();
            out += &format!("| {d} | {metric} | {} |\n", cells.join(" | "));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "markdown-table" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format '{other}' (json, csv, markdown)")),
        }
    }
}

pub fn render(report: &RunReport, format: Format) -> CliResult<String> {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        Format::Markdown => Ok(report.to_markdown()),
    }
}
