//! Forecast metrics, zero-shot and few-shot protocols, token-space diagnostics.

mod tokens;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use tokens::{collect_tokens, pca2d, token_space_stats, write_pca_csv, PcaPoint, PointKind, TokenSpaceStats};

use crate::data::{few_shot_subset, WindowSample};
use crate::error::{Error, Result};
use crate::model::{forecast_batch, ForecastModel, ParamGroup, PatchPredictor};
use crate::train::{grid_search_lr, GridCandidate, TrainConfig, TrainLog};

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("metric", &[pred.len()], &[target.len()]));
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    /// MSE at each horizon step, averaged over windows.
    pub per_step_mse: Vec<f64>,
}

impl MetricReport {
    /// Aggregates forecasts against targets, all in raw units.
    pub fn from_forecasts(preds: &[Vec<f64>], targets: &[&[f64]]) -> Result<MetricReport> {
        if preds.len() != targets.len() || preds.is_empty() {
            return Err(Error::shape("metric_report", &[preds.len()], &[targets.len()]));
        }
        let h = targets[0].len();
        let mut step = vec![0.0; h];
        let mut abs = 0.0;
        for (p, t) in preds.iter().zip(targets) {
            check_pair(p, t)?;
            if t.len() != h {
                return Err(Error::shape("metric_report", &[h], &[t.len()]));
            }
            for j in 0..h {
                let e = p[j] - t[j];
                step[j] += e * e;
                abs += e.abs();
            }
        }
        let n = preds.len() as f64;
        step.iter_mut().for_each(|s| *s /= n);
        Ok(MetricReport {
            mse: step.iter().sum::<f64>() / h as f64,
            mae: abs / (n * h as f64),
            n_windows: preds.len(),
            per_step_mse: step,
        })
    }
}

/// Forecasts every window's horizon from its look-back, in batches.
pub fn evaluate_windows<M: PatchPredictor + ?Sized>(model: &M, windows: &[WindowSample]) -> Result<MetricReport> {
    let Some(first) = windows.first() else {
        return Err(Error::Usage("cannot evaluate on zero windows".into()));
    };
    let h = first.y.len();
    let mut preds = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(256) {
        let xs: Vec<&[f64]> = chunk.iter().map(|w| w.x.as_slice()).collect();
        preds.extend(forecast_batch(model, &xs, h)?);
    }
    let targets: Vec<&[f64]> = windows.iter().map(|w| w.y.as_slice()).collect();
    MetricReport::from_forecasts(&preds, &targets)
}

/// Evaluation without any training; fails if parameters changed.
pub fn evaluate_zero_shot(model: &ForecastModel, test: &[WindowSample]) -> Result<MetricReport> {
    let before = model.param_hash();
    let report = evaluate_windows(model, test)?;
    if model.param_hash() != before {
        return Err(Error::Numeric {
            op: "evaluate_zero_shot",
            msg: "model parameters changed during evaluation".into(),
        });
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotMode {
    /// Backbone (and positional table) frozen; encoder, decoder and adapter tuned.
    TuneEncdec,
    /// Encoder, decoder and adapter frozen; backbone tuned.
    TuneBackbone,
}

impl FewShotMode {
    pub fn frozen(self) -> BTreeSet<ParamGroup> {
        match self {
            FewShotMode::TuneEncdec => [ParamGroup::Backbone, ParamGroup::Pos].into(),
            FewShotMode::TuneBackbone => [ParamGroup::Encoder, ParamGroup::Decoder, ParamGroup::Adapter].into(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FewShotMode::TuneEncdec => "tune_encdec",
            FewShotMode::TuneBackbone => "tune_backbone",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    pub mode: FewShotMode,
    pub report: MetricReport,
    pub best_lr: f64,
    pub log: TrainLog,
    pub candidates: Vec<GridCandidate>,
    pub n_train_windows: usize,
}

/// Last `fraction` of each series' training windows, series kept in order.
pub fn few_shot_per_series(train: &[WindowSample], fraction: f64) -> Result<Vec<WindowSample>> {
    few_shot_subset(&train[..0], fraction)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start < train.len() {
        let s = train[start].series;
        let end = start + train[start..].iter().take_while(|w| w.series == s).count();
        out.extend(few_shot_subset(&train[start..end], fraction)?);
        start = end;
    }
    Ok(out)
}

/// Tunes the mode's groups on the last `fraction` of the training windows
/// with learning-rate grid search and early stopping, then scores the test
/// windows.
pub fn evaluate_few_shot(
    model: &mut ForecastModel,
    train: &[WindowSample],
    val: &[WindowSample],
    test: &[WindowSample],
    cfg: &TrainConfig,
    mode: FewShotMode,
    fraction: f64,
) -> Result<FewShotResult> {
    let subset = few_shot_per_series(train, fraction)?;
    let cfg = TrainConfig {
        freeze: mode.frozen(),
        pos_follows_backbone: true,
        ..cfg.clone()
    };
    let gs = grid_search_lr(model, &subset, val, &cfg)?;
    Ok(FewShotResult {
        mode,
        report: evaluate_windows(model, test)?,
        best_lr: gs.best_lr,
        log: gs.log,
        candidates: gs.candidates,
        n_train_windows: subset.len(),
    })
}

/// `(mse − mse_ref) / mse_ref`.
pub fn relative_error(report: &MetricReport, reference: &MetricReport) -> Result<f64> {
    if reference.mse == 0.0 {
        return Err(Error::UndefinedReference);
    }
    Ok((report.mse - reference.mse) / reference.mse)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(m: f64) -> MetricReport {
        MetricReport {
            mse: m,
            mae: 0.0,
            n_windows: 1,
            per_step_mse: vec![m],
        }
    }

    #[test]
    fn hand_metrics() {
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        assert_eq!(mae(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 1.5);
        assert_eq!(mse(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn relative_error_fixtures() {
        assert!((relative_error(&report(0.55), &report(0.50)).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(relative_error(&report(0.5), &report(0.5)).unwrap(), 0.0);
        assert!(matches!(relative_error(&report(0.5), &report(0.0)), Err(Error::UndefinedReference)));
    }

    /// Returns the same patch for every context.
    struct Oracle(Vec<f64>);

    impl PatchPredictor for Oracle {
        fn patch_size(&self) -> usize {
            4
        }
        fn predict_next(&self, contexts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
            Ok(contexts.iter().map(|_| self.0.clone()).collect())
        }
    }

    #[test]
    fn per_step_averages_to_total() {
        let preds = vec![vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 2.0]];
        let t1 = [0.0, 2.5, 1.0];
        let t2 = [1.0, 1.0, 1.0];
        let r = MetricReport::from_forecasts(&preds, &[&t1, &t2]).unwrap();
        let avg = r.per_step_mse.iter().sum::<f64>() / 3.0;
        assert!((avg - r.mse).abs() < 1e-12);
        let flat_p: Vec<f64> = preds.concat();
        let flat_t: Vec<f64> = [t1, t2].concat();
        assert!((r.mse - mse(&flat_p, &flat_t).unwrap()).abs() < 1e-12);
        assert!((r.mae - mae(&flat_p, &flat_t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_oracle_scores_zero() {
        // A constant series normalizes to zeros, so predicting zeros is exact.
        let w = WindowSample::new(vec![2.0; 8], vec![2.0; 4], 0, 0);
        let r = evaluate_windows(&Oracle(vec![0.0; 4]), &[w]).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.mae, 0.0);
    }
}
