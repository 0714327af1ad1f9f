//! Backbone knowledge states and checkpoint persistence.

mod checkpoint;
mod text_proxy;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, inspect_checkpoint, load_checkpoint, save_checkpoint, CheckpointInfo, CheckpointMeta, Dtype, TensorInfo, MAGIC, VERSION};
pub use text_proxy::{pretrain_text_proxy, unigram_perplexity, MarkovChain, TextProxyOutcome, TextProxySpec};

use crate::model::{ForecastModel, ParamGroup, ParamKind};
use crate::numeric::Rng;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    Diagonal,
    FromCheckpoint,
    TextProxyPretrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
    #[serde(default)]
    pub text_proxy: TextProxySpec,
}

impl InitSpec {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        InitSpec {
            kind,
            seed,
            checkpoint_path: None,
            text_proxy: TextProxySpec::default(),
        }
    }
}

/// GPT-2 convention: weights and embeddings `N(0, 0.02²)`, biases 0, gains 1.
/// Each tensor draws from its own stream keyed by its name.
pub fn init_random(model: &ForecastModel, seed: u64) {
    init_random_groups(model, seed, &ParamGroup::ALL);
}

pub fn init_random_groups(model: &ForecastModel, seed: u64, groups: &[ParamGroup]) {
    for p in model.named_params().into_iter().filter(|p| groups.contains(&p.group)) {
        let mut d = p.tensor.data_mut();
        match p.kind {
            ParamKind::Weight | ParamKind::Embedding => {
                let mut rng = Rng::derive(seed, &format!("init/{}", p.name));
                d.iter_mut().for_each(|v| *v = rng.normal(0.0, INIT_STD));
            }
            ParamKind::Bias => d.fill(0.0),
            ParamKind::Gain => d.fill(1.0),
            ParamKind::Buffer => {}
        }
    }
}

/// Writes `1` on the rectangular main diagonal of an `r × c` row-major matrix.
pub fn rect_diagonal(rows: usize, cols: usize) -> Vec<f64> {
    let mut w = vec![0.0; rows * cols];
    for i in 0..rows.min(cols) {
        w[i * cols + i] = 1.0;
    }
    w
}

/// Backbone matrices become rectangular identities, biases 0, gains 1, and
/// the positional table is zeroed. Other groups are left alone.
pub fn init_diagonal(model: &ForecastModel) {
    for p in model.named_params() {
        let mut d = p.tensor.data_mut();
        match (p.group, p.kind) {
            (ParamGroup::Backbone, ParamKind::Weight) => {
                let s = p.tensor.shape();
                d.copy_from_slice(&rect_diagonal(s[0], s[1]));
            }
            (ParamGroup::Backbone, ParamKind::Bias) => d.fill(0.0),
            (ParamGroup::Backbone, ParamKind::Gain) => d.fill(1.0),
            (ParamGroup::Pos, _) => d.fill(0.0),
            _ => {}
        }
    }
}

/// True when every backbone matrix is a rectangular identity and every
/// backbone bias is zero, compared exactly.
pub fn is_diagonal_backbone(model: &ForecastModel) -> bool {
    model.params_in(ParamGroup::Backbone).iter().all(|p| {
        let d = p.tensor.data();
        match p.kind {
            ParamKind::Weight => {
                let s = p.tensor.shape();
                *d == rect_diagonal(s[0], s[1])
            }
            ParamKind::Bias => d.iter().all(|&v| v == 0.0),
            ParamKind::Gain => d.iter().all(|&v| v == 1.0),
            _ => true,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn random_init_conventions() {
        let m = ForecastModel::new(ModelConfig::tiny()).unwrap();
        init_random(&m, 5);
        let other = ForecastModel::new(ModelConfig::tiny()).unwrap();
        init_random(&other, 5);
        assert_eq!(m.snapshot(), other.snapshot());
        for p in m.named_params() {
            let d = p.tensor.data();
            match p.kind {
                ParamKind::Bias => assert!(d.iter().all(|&v| v == 0.0), "{}", p.name),
                ParamKind::Gain => assert!(d.iter().all(|&v| v == 1.0), "{}", p.name),
                _ => assert!(d.iter().any(|&v| v != 0.0), "{}", p.name),
            }
        }
    }

    #[test]
    fn random_weight_std() {
        let cfg = ModelConfig::full();
        let m = ForecastModel::new(ModelConfig { n_layers: 1, ..cfg }).unwrap();
        init_random(&m, 1);
        let p = m.named_params().into_iter().find(|p| p.name == "backbone.blocks.0.attn.q.weight").unwrap();
        let d = p.tensor.data();
        assert_eq!(p.tensor.shape(), &[768, 768]);
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 0.02).abs() < 0.002, "{std}");
    }

    #[test]
    fn rectangular_diagonal() {
        assert_eq!(rect_diagonal(2, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(rect_diagonal(3, 2), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn diagonal_scope() {
        let m = ForecastModel::new(ModelConfig::tiny()).unwrap();
        init_random(&m, 2);
        let enc = m.group_state(ParamGroup::Encoder);
        init_diagonal(&m);
        assert!(is_diagonal_backbone(&m));
        assert_eq!(m.group_state(ParamGroup::Encoder), enc);
        assert!(m.pos.data().iter().all(|&v| v == 0.0));
    }
}
