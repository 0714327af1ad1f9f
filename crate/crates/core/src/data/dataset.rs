use std::path::Path;

use serde::{Deserialize, Serialize};

use super::window::{split_windows, SplitSpec, SplitWindows};
use crate::error::{Error, Result};

/// A set of univariate series. Multivariate sources expand to one series per
/// channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDataset {
    pub name: String,
    pub series: Vec<Vec<f64>>,
    #[serde(default)]
    pub frequency: Option<String>,
}

impl SeriesDataset {
    pub fn new(name: impl Into<String>, series: Vec<Vec<f64>>) -> Self {
        SeriesDataset {
            name: name.into(),
            series,
            frequency: None,
        }
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Errors unless every series holds at least `min_len` finite values.
    pub fn check(&self, min_len: usize) -> Result<()> {
        for (i, s) in self.series.iter().enumerate() {
            if s.len() < min_len {
                return Err(Error::Ingest(format!(
                    "{}: series {i} has {} points, need at least {min_len}",
                    self.name,
                    s.len()
                )));
            }
            if let Some(j) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingest(format!("{}: series {i} has a non-finite value at {j}", self.name)));
            }
        }
        Ok(())
    }

    /// Chronological split of every series, windows concatenated in series order.
    pub fn split_windows(&self, split: &SplitSpec, lookback: usize, horizon: usize, stride: usize) -> Result<SplitWindows> {
        let mut out = SplitWindows::default();
        for (i, s) in self.series.iter().enumerate() {
            out.extend(split_windows(s, i, split, lookback, horizon, stride)?);
        }
        Ok(out)
    }
}

/// Reads the named value columns of a headed CSV file, one series per column
/// in file row order. An empty `value_columns` selects every column except
/// ones named `date`, `time` or `timestamp`.
pub fn load_csv(path: &Path, value_columns: &[String]) -> Result<SeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let wanted: Vec<String> = if value_columns.is_empty() {
        headers
            .iter()
            .filter(|h| !matches!(h.to_ascii_lowercase().as_str(), "date" | "time" | "timestamp"))
            .cloned()
            .collect()
    } else {
        value_columns.to_vec()
    };
    let mut idx = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let i = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("{}: missing column {name:?}", path.display())))?;
        idx.push(i);
    }
    let mut series = vec![Vec::new(); wanted.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::Ingest(format!("{}: row {row}: {e}", path.display())))?;
        for ((s, &i), name) in series.iter_mut().zip(&idx).zip(&wanted) {
            let cell = rec.get(i).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: name.clone(),
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.clone(),
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            s.push(v);
        }
    }
    if let Some(k) = series.iter().position(|s| s.is_empty()) {
        return Err(Error::Ingest(format!("{}: column {:?} is empty", path.display(), wanted[k])));
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SeriesDataset::new(name, series))
}

/// Writes equal-length series as columns `columns` (or `v0, v1, ...`).
pub fn write_csv(ds: &SeriesDataset, path: &Path, columns: Option<&[String]>) -> Result<()> {
    let n = ds.series.first().map(|s| s.len()).unwrap_or(0);
    if let Some(s) = ds.series.iter().find(|s| s.len() != n) {
        return Err(Error::shape("write_csv", &[n], &[s.len()]));
    }
    let names: Vec<String> = match columns {
        Some(c) if c.len() == ds.series.len() => c.to_vec(),
        Some(c) => return Err(Error::shape("write_csv", &[ds.series.len()], &[c.len()])),
        None => (0..ds.series.len()).map(|i| format!("v{i}")).collect(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| Error::Ingest(format!("{}: {e}", path.display()));
    w.write_record(&names).map_err(wrap)?;
    for r in 0..n {
        // `{:?}` prints the shortest representation that parses back exactly.
        w.write_record(ds.series.iter().map(|s| format!("{:?}", s[r]))).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
