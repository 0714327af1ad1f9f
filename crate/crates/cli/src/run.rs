//! Executes an experiment spec and writes its artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tslab_core::data::{corpus_windows, load_csv, synth_corpus, SplitWindows, WindowSample};
use tslab_core::eval::MetricReport;
use tslab_core::init::{save_checkpoint, Dtype};
use tslab_core::model::ForecastModel;
use tslab_core::numeric::Rng;
use tslab_core::train::{grid_search_lr, train, AssemblyConfig, TrainConfig, TrainLog};

use crate::error::{CliError, CliResult};
use crate::kinds;
use crate::report::{average_rows, MetricRow, RunReport, SeedResult};
use crate::spec::{DataSource, DatasetSpec, ExperimentSpec, Geometry};

pub const OUTPUT_ROOT_ENV: &str = "TSLAB_OUTPUT_ROOT";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `output_dir` from the spec, else `$TSLAB_OUTPUT_ROOT/<name>`, else `runs/<name>`.
pub fn default_output_dir(spec: &ExperimentSpec) -> PathBuf {
    if let Some(d) = &spec.output_dir {
        return d.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(&spec.name)
}

pub fn config_hash(spec: &ExperimentSpec) -> CliResult<String> {
    let canonical = serde_json::to_string(spec)?;
    Ok(Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// A dataset's chronological windows.
pub struct Prepared {
    pub name: String,
    pub windows: SplitWindows,
}

pub fn prepare_dataset(d: &DatasetSpec, geo: &Geometry) -> CliResult<Prepared> {
    let ds = match &d.source {
        DataSource::Synthetic {
            family,
            n_series,
            length,
            seed,
        } => {
            let s = Rng::derive(*seed, &format!("dataset/{}", d.name)).next_u64();
            synth_corpus(std::slice::from_ref(family), *n_series, *length, s)?
        }
        DataSource::Csv { path, columns } => load_csv(path, columns)?,
    };
    ds.check(geo.lookback + geo.horizon)?;
    let stride = d.stride.unwrap_or(geo.horizon);
    let windows = ds.split_windows(&d.split, geo.lookback, geo.horizon, stride)?;
    for (part, w) in [("train", &windows.train), ("val", &windows.val), ("test", &windows.test)] {
        if w.is_empty() {
            return Err(tslab_core::Error::Usage(format!("dataset '{}' has no {part} windows", d.name)).into());
        }
    }
    Ok(Prepared {
        name: d.name.clone(),
        windows,
    })
}

pub fn metric_row(dataset: &str, model: &str, r: &MetricReport) -> MetricRow {
    MetricRow {
        dataset: dataset.to_string(),
        model: model.to_string(),
        mse: r.mse,
        mae: r.mae,
        n_windows: r.n_windows,
    }
}

/// Training outcome without wall time.
pub fn log_json(l: &TrainLog) -> Value {
    json!({
        "lr": l.lr,
        "initial_val_loss": l.initial_val_loss,
        "best_epoch": l.best_epoch,
        "best_val_loss": l.best_val_loss,
        "stop_epoch": l.stop_epoch,
        "stopped_early": l.stopped_early,
        "steps": l.steps,
    })
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub quiet: bool,
}

/// Shared state of one run: resolved geometry, prepared datasets and the
/// artifacts written so far.
pub struct Run<'a> {
    pub spec: &'a ExperimentSpec,
    pub geo: Geometry,
    pub dir: PathBuf,
    pub datasets: Vec<Prepared>,
    quiet: bool,
    timings: Vec<Value>,
    checkpoints: Vec<String>,
    artifacts: Vec<String>,
    curves: Vec<[String; 5]>,
}

impl<'a> Run<'a> {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.spec.name, msg.as_ref());
        }
    }

    pub fn timed<T>(&mut self, stage: String, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        self.note(&stage);
        let t = Instant::now();
        let out = f(self);
        self.timings.push(json!({"stage": stage, "secs": t.elapsed().as_secs_f64()}));
        out
    }

    pub fn dataset(&self, name: &str) -> CliResult<&Prepared> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| CliError::Report(format!("unknown dataset '{name}'")))
    }

    pub fn assembly(&self, seed: u64) -> AssemblyConfig {
        AssemblyConfig {
            model: self.geo.model.clone(),
            train: self.spec.train.clone(),
            text_proxy: self.spec.text_proxy.clone(),
            seed,
        }
    }

    /// The first `n` corpus windows for `seed`; smaller requests are prefixes.
    pub fn corpus(&self, seed: u64, n: usize) -> CliResult<Vec<WindowSample>> {
        let c = self
            .spec
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::Report("spec has no corpus".into()))?;
        let s = Rng::derive(seed, "corpus").next_u64();
        Ok(corpus_windows(&c.families, n, self.geo.lookback, self.geo.horizon, s)?)
    }

    pub fn corpus_size(&self) -> usize {
        self.spec.corpus.as_ref().map_or(0, |c| c.n_windows)
    }

    /// Fine-tuning config with a seed derived from `tag`.
    pub fn finetune_cfg(&self, seed: u64, tag: &str) -> TrainConfig {
        TrainConfig {
            seed: Rng::derive(seed, tag).next_u64(),
            ..self.spec.finetune.clone()
        }
    }

    /// Trains with grid search when the config lists a grid, otherwise at its
    /// single learning rate.
    pub fn fit(&mut self, model: &mut ForecastModel, data: &Prepared, cfg: &TrainConfig, label: &str, seed: u64) -> CliResult<TrainLog> {
        let w = &data.windows;
        let log = if cfg.grid.is_some() {
            grid_search_lr(model, &w.train, &w.val, cfg)?.log
        } else {
            train(model, &w.train, &w.val, cfg)?
        };
        self.record_curve(seed, &format!("{}/{label}", data.name), &log);
        Ok(log)
    }

    pub fn record_curve(&mut self, seed: u64, label: &str, log: &TrainLog) {
        for e in &log.epochs {
            self.curves.push([
                seed.to_string(),
                label.to_string(),
                e.epoch.to_string(),
                format!("{:?}", e.train_loss),
                format!("{:?}", e.val_loss),
            ]);
        }
    }

    pub fn save_model(&mut self, model: &ForecastModel, seed: u64, label: &str) -> CliResult<()> {
        if !self.spec.save_checkpoints {
            return Ok(());
        }
        let rel = format!("checkpoints/seed{seed}/{}.tslb", label.replace('/', "_"));
        let path = self.dir.join(&rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        let tags = BTreeMap::from([
            ("experiment".to_string(), self.spec.name.clone()),
            ("kind".to_string(), self.spec.kind.name().to_string()),
            ("seed".to_string(), seed.to_string()),
            ("model".to_string(), label.to_string()),
        ]);
        save_checkpoint(model, &path, &tags, Dtype::F64)?;
        self.checkpoints.push(rel);
        Ok(())
    }

    /// Writes `plots/<name>` and records it as an artifact.
    pub fn write_plot(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let rel = format!("plots/{name}");
        let path = self.dir.join(&rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
        Ok(())
    }

    pub fn plot_path(&mut self, name: &str) -> CliResult<PathBuf> {
        let rel = format!("plots/{name}");
        let path = self.dir.join(&rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        if !self.artifacts.contains(&rel) {
            self.artifacts.push(rel);
        }
        Ok(path)
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Validates, runs every seed and writes `report.json`, `metrics.csv`,
/// `timings.json` and plot data under `opts.out_dir`. On failure the
/// directory keeps whatever was written plus a `FAILED` marker.
pub fn run(spec: &ExperimentSpec, opts: &RunOptions) -> CliResult<RunReport> {
    let diags = spec.validate();
    if !diags.is_empty() {
        return Err(CliError::Invalid(diags));
    }
    let dir = opts.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let failed = dir.join("FAILED");
    if failed.exists() {
        std::fs::remove_file(&failed).map_err(|e| CliError::io(&failed, e))?;
    }
    let mut run = Run {
        spec,
        geo: spec.geometry(),
        dir: dir.clone(),
        datasets: Vec::new(),
        quiet: opts.quiet,
        timings: Vec::new(),
        checkpoints: Vec::new(),
        artifacts: Vec::new(),
        curves: Vec::new(),
    };
    let result = execute(&mut run);
    let timings = json!({"stages": run.timings});
    write_file(&dir.join("timings.json"), &(serde_json::to_string_pretty(&timings)? + "\n"))?;
    match result {
        Ok(report) => Ok(report),
        Err(e) => {
            write_file(&failed, &format!("{e}\n"))?;
            Err(e)
        }
    }
}

fn execute(run: &mut Run) -> CliResult<RunReport> {
    let spec = run.spec;
    let started = Instant::now();
    run.datasets = run.timed("prepare datasets".into(), |r| {
        spec.datasets.iter().map(|d| prepare_dataset(d, &r.geo)).collect::<CliResult<Vec<_>>>()
    })?;
    let mut per_seed = Vec::with_capacity(spec.seeds.len());
    for &seed in &spec.seeds {
        let res = run.timed(format!("seed {seed}"), |r| kinds::run_seed(r, seed))?;
        per_seed.push(res);
    }
    let averaged = average_rows(&per_seed);
    let summary = kinds::summarize(run, &per_seed, &averaged)?;
    if !run.curves.is_empty() {
        let rows: Vec<Vec<String>> = run.curves.iter().map(|c| c.to_vec()).collect();
        run.write_plot("train_curves.csv", &["seed", "model", "epoch", "train_loss", "val_loss"], &rows)?;
    }
    let report = RunReport {
        engine_version: ENGINE_VERSION.to_string(),
        config_hash: config_hash(spec)?,
        spec: spec.clone(),
        per_seed: per_seed.clone(),
        averaged,
        summary,
        checkpoints: run.checkpoints.clone(),
        artifacts: run.artifacts.clone(),
    };
    write_file(&run.dir.join("report.json"), &report.to_json()?)?;
    write_file(&run.dir.join("metrics.csv"), &report.to_csv()?)?;
    run.timings.push(json!({"stage": "total", "secs": started.elapsed().as_secs_f64()}));
    Ok(report)
}

pub fn seed_result(seed: u64, rows: Vec<MetricRow>, details: Value) -> SeedResult {
    SeedResult { seed, rows, details }
}
