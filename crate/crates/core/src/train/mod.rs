//! Mini-batch Adam training with early stopping, learning-rate grid search
//! and corpus pretraining of the model variants.

mod assemble;

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble_model, text_proxy_model, Assembled, AssemblyConfig, Variant};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{ForecastModel, ParamGroup};
use crate::numeric::{clip_grad_norm, no_grad, AdamState, Rng};

pub const DEFAULT_GRID: [f64; 5] = [1e-2, 1e-3, 5e-4, 1e-4, 5e-5];

fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    3
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub freeze: BTreeSet<ParamGroup>,
    /// Freezing the backbone also freezes the positional table.
    #[serde(default = "default_true")]
    pub pos_follows_backbone: bool,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// At most this many mini-batches per epoch, drawn from a fresh shuffle.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    /// Gradients are rescaled to this global L2 norm when they exceed it.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            seed: 0,
            freeze: BTreeSet::new(),
            pos_follows_backbone: true,
            grid: None,
            steps_per_epoch: None,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if let Some(g) = &self.grid {
            if g.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
                return Err(Error::Config("grid learning rates must be positive".into()));
            }
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_freeze(&self) -> BTreeSet<ParamGroup> {
        let mut f = self.freeze.clone();
        if self.pos_follows_backbone && f.contains(&ParamGroup::Backbone) {
            f.insert(ParamGroup::Pos);
        }
        f
    }

    pub fn with_freeze(mut self, groups: &[ParamGroup]) -> Self {
        self.freeze = groups.iter().copied().collect();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub lr: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stop_epoch: usize,
    pub stopped_early: bool,
    pub steps: usize,
    pub wall_time_secs: f64,
}

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val: f64) -> StopDecision {
        if val < self.best {
            self.best = val;
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
            StopDecision::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

fn sequences(windows: &[WindowSample]) -> Vec<Vec<f64>> {
    windows.iter().map(|w| w.training_sequence()).collect()
}

/// Mean teacher-forced loss over `seqs`, without recording gradients.
pub fn mean_loss(model: &ForecastModel, seqs: &[Vec<f64>]) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::Usage("cannot evaluate a loss on zero windows".into()));
    }
    let _g = no_grad();
    let mut total = 0.0;
    for chunk in seqs.chunks(128) {
        let refs: Vec<&[f64]> = chunk.iter().map(|s| s.as_slice()).collect();
        total += model.forward_train(&refs)?.item() * chunk.len() as f64;
    }
    Ok(total / seqs.len() as f64)
}

pub fn window_loss(model: &ForecastModel, windows: &[WindowSample]) -> Result<f64> {
    mean_loss(model, &sequences(windows))
}

/// Trains the unfrozen groups of `model` and leaves it holding the
/// parameters of the best validation epoch.
pub fn train(model: &mut ForecastModel, windows: &[WindowSample], val: &[WindowSample], cfg: &TrainConfig) -> Result<TrainLog> {
    train_with(model, windows, val, cfg, cfg.lr, cfg.seed)
}

fn train_with(
    model: &mut ForecastModel,
    windows: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
    lr: f64,
    seed: u64,
) -> Result<TrainLog> {
    cfg.validate()?;
    if windows.is_empty() || val.is_empty() {
        return Err(Error::Usage("training needs non-empty train and validation windows".into()));
    }
    let start = Instant::now();
    model.set_frozen(&cfg.effective_freeze());
    let params = model.trainable_params();
    if params.is_empty() {
        return Err(Error::Usage("nothing trainable: every parameter group is frozen".into()));
    }
    let train_seqs = sequences(windows);
    let val_seqs = sequences(val);
    let initial_val_loss = mean_loss(model, &val_seqs)?;

    let mut opt = AdamState::new(lr, &params);
    let mut rng = Rng::derive(seed, "train/shuffle");
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_state = None;
    let mut epochs = Vec::new();
    let mut steps = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_seqs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let n_batches = train_seqs.len().div_ceil(cfg.batch_size);
        let n_batches = cfg.steps_per_epoch.map_or(n_batches, |c| c.min(n_batches));
        let mut loss_sum = 0.0;
        for b in 0..n_batches {
            let idx = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(order.len())];
            let batch: Vec<&[f64]> = idx.iter().map(|&i| train_seqs[i].as_slice()).collect();
            model.zero_grad();
            let loss = model.forward_train(&batch)?;
            let lv = loss.item();
            if !lv.is_finite() {
                return Err(Error::Numeric {
                    op: "train",
                    msg: format!("non-finite training loss at epoch {epoch}"),
                });
            }
            loss.backward()?;
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&params, c);
            }
            opt.step(&params)?;
            loss_sum += lv;
            steps += 1;
        }
        let val_loss = mean_loss(model, &val_seqs)?;
        epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
        });
        match stopper.update(epoch, val_loss) {
            StopDecision::Improved => best_state = Some(model.snapshot()),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    if let Some(s) = &best_state {
        model.restore(s)?;
    }
    model.zero_grad();
    Ok(TrainLog {
        lr,
        initial_val_loss,
        stop_epoch: epochs.len(),
        epochs,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_epoch.map(|_| stopper.best),
        stopped_early,
        steps,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub lr: f64,
    pub best_val_loss: f64,
    /// Parameter hash at the start of this candidate's run.
    pub start_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best_lr: f64,
    pub log: TrainLog,
    pub candidates: Vec<GridCandidate>,
}

/// Index of the smallest loss; ties go to the smaller learning rate.
pub fn select_lr(results: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(lr, loss)) in results.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(j) => {
                let (blr, bl) = results[j];
                if loss < bl || (loss == bl && lr < blr) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    best
}

/// Trains one run per grid learning rate, each from the model's current
/// parameters, and leaves the model holding the winner's parameters.
pub fn grid_search_lr(
    model: &mut ForecastModel,
    windows: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<GridSearch> {
    let grid = cfg.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    if grid.is_empty() {
        return Err(Error::Usage("learning-rate grid is empty".into()));
    }
    let initial = model.snapshot();
    let mut candidates = Vec::with_capacity(grid.len());
    let mut finals = Vec::with_capacity(grid.len());
    let mut logs = Vec::with_capacity(grid.len());
    for (i, &lr) in grid.iter().enumerate() {
        model.restore(&initial)?;
        let start_hash = model.param_hash();
        let seed = Rng::derive(cfg.seed, &format!("grid/{i}")).next_u64();
        let log = train_with(model, windows, val, cfg, lr, seed)?;
        candidates.push(GridCandidate {
            lr,
            best_val_loss: log.best_val_loss.unwrap_or(log.initial_val_loss),
            start_hash,
        });
        finals.push(model.snapshot());
        logs.push(log);
    }
    let pairs: Vec<(f64, f64)> = candidates.iter().map(|c| (c.lr, c.best_val_loss)).collect();
    let k = select_lr(&pairs).expect("non-empty grid");
    model.restore(&finals[k])?;
    Ok(GridSearch {
        best_lr: grid[k],
        log: logs.swap_remove(k),
        candidates,
    })
}

/// Every 20th window (5%) goes to validation.
pub fn corpus_split(corpus: &[WindowSample]) -> (Vec<WindowSample>, Vec<WindowSample>) {
    let mut train = Vec::with_capacity(corpus.len());
    let mut val = Vec::with_capacity(corpus.len() / 20 + 1);
    for (i, w) in corpus.iter().enumerate() {
        if i % 20 == 19 {
            val.push(w.clone());
        } else {
            train.push(w.clone());
        }
    }
    if val.is_empty() && train.len() > 1 {
        val.push(train.pop().expect("non-empty"));
    }
    (train, val)
}

pub fn pretrain_on_corpus(model: &mut ForecastModel, corpus: &[WindowSample], cfg: &TrainConfig) -> Result<TrainLog> {
    if corpus.len() < 2 {
        return Err(Error::Usage("pretraining corpus needs at least 2 windows".into()));
    }
    let (train_w, val_w) = corpus_split(corpus);
    train(model, &train_w, &val_w, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_three_fixture() {
        let mut s = EarlyStopping::new(3);
        let d: Vec<StopDecision> = [0.5, 0.6, 0.6, 0.6].iter().enumerate().map(|(i, &v)| s.update(i + 1, v)).collect();
        assert_eq!(
            d,
            vec![StopDecision::Improved, StopDecision::Continue, StopDecision::Continue, StopDecision::Stop]
        );
        assert_eq!(s.best_epoch, Some(1));
    }

    #[test]
    fn decreasing_never_stops() {
        let mut s = EarlyStopping::new(1);
        assert!((1..=50).all(|e| s.update(e, 1.0 / e as f64) == StopDecision::Improved));
    }

    #[test]
    fn lr_selection() {
        assert_eq!(select_lr(&[(1e-3, 0.40), (1e-4, 0.50)]), Some(0));
        assert_eq!(select_lr(&[(1e-3, 0.40), (1e-4, 0.40)]), Some(1));
        assert_eq!(select_lr(&[(1e-4, 0.40), (1e-3, 0.40)]), Some(0));
        assert_eq!(select_lr(&[]), None);
    }

    #[test]
    fn corpus_split_fraction() {
        let ws: Vec<WindowSample> = (0..100).map(|i| WindowSample::new(vec![i as f64], vec![0.0], i, 0)).collect();
        let (t, v) = corpus_split(&ws);
        assert_eq!((t.len(), v.len()), (95, 5));
    }

    #[test]
    fn pos_follows_backbone() {
        let c = TrainConfig::default().with_freeze(&[ParamGroup::Backbone]);
        assert!(c.effective_freeze().contains(&ParamGroup::Pos));
        let c = TrainConfig {
            pos_follows_backbone: false,
            ..c
        };
        assert!(!c.effective_freeze().contains(&ParamGroup::Pos));
    }
}
