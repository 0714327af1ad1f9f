use serde::{Deserialize, Serialize};

use super::{pretrain_on_corpus, TrainConfig, TrainLog};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::init::{init_diagonal, init_random, pretrain_text_proxy, TextProxyOutcome, TextProxySpec};
use crate::model::{ForecastModel, ModelConfig, ParamGroup};
use crate::numeric::Rng;

/// The backbone knowledge states under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Text-proxy pretrained backbone, frozen; encoder/decoder trained on the corpus.
    A,
    /// Encoder/decoder copied from A and frozen; backbone re-randomized and trained.
    B,
    /// Everything random and trained jointly.
    C,
    /// Diagonal backbone, frozen; encoder/decoder trained.
    Di,
    /// Single linear backbone at reduced width, everything trained.
    Linear,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::A, Variant::B, Variant::C, Variant::Di, Variant::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::Di => "di",
            Variant::Linear => "linear",
        }
    }

    /// Groups held fixed during corpus training.
    pub fn corpus_freeze(self) -> &'static [ParamGroup] {
        match self {
            Variant::A | Variant::Di => &[ParamGroup::Backbone],
            Variant::B => &[ParamGroup::Encoder, ParamGroup::Decoder],
            Variant::C | Variant::Linear => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub text_proxy: TextProxySpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug)]
pub struct Assembled {
    pub variant: Variant,
    pub model: ForecastModel,
    pub log: TrainLog,
    pub text_proxy: Option<TextProxyOutcome>,
}

fn sub_seed(seed: u64, tag: &str) -> u64 {
    Rng::derive(seed, tag).next_u64()
}

/// The text-proxy pretrained starting point of variant A, before corpus
/// training. An adapter, when configured, takes the learned token table as
/// its source embedding.
pub fn text_proxy_model(cfg: &AssemblyConfig) -> Result<(ForecastModel, TextProxyOutcome)> {
    let m = ForecastModel::new(cfg.model.clone())?;
    init_random(&m, sub_seed(cfg.seed, "assemble/a/init"));
    let out = pretrain_text_proxy(&m, &cfg.text_proxy, sub_seed(cfg.seed, "assemble/a/text-proxy"))?;
    if let Some(a) = &m.adapter {
        a.set_source(&out.embedding)?;
    }
    Ok((m, out))
}

/// Builds and corpus-trains one variant. Variant B reuses the encoder and
/// decoder of `from_a`, assembling A first when none is given.
pub fn assemble_model(
    variant: Variant,
    corpus: &[WindowSample],
    cfg: &AssemblyConfig,
    from_a: Option<&ForecastModel>,
) -> Result<Assembled> {
    if corpus.is_empty() {
        return Err(Error::Usage("cannot assemble a model on an empty corpus".into()));
    }
    let tag = variant.name();
    let mut text_proxy = None;
    let mut model = match variant {
        Variant::A => {
            let (m, out) = text_proxy_model(cfg)?;
            text_proxy = Some(out);
            m
        }
        Variant::B => {
            let owned;
            let a = match from_a {
                Some(a) => a,
                None => {
                    owned = assemble_model(Variant::A, corpus, cfg, None)?;
                    &owned.model
                }
            };
            let m = ForecastModel::new(cfg.model.clone())?;
            init_random(&m, sub_seed(cfg.seed, "assemble/b/init"));
            m.copy_group_from(a, ParamGroup::Encoder)?;
            m.copy_group_from(a, ParamGroup::Decoder)?;
            m
        }
        Variant::C => {
            let m = ForecastModel::new(cfg.model.clone())?;
            init_random(&m, sub_seed(cfg.seed, "assemble/c/init"));
            m
        }
        Variant::Di => {
            let m = ForecastModel::new(cfg.model.clone())?;
            init_random(&m, sub_seed(cfg.seed, "assemble/di/init"));
            init_diagonal(&m);
            m
        }
        Variant::Linear => {
            let m = ForecastModel::new(cfg.model.linear_baseline())?;
            init_random(&m, sub_seed(cfg.seed, "assemble/linear/init"));
            m
        }
    };
    let train_cfg = TrainConfig {
        seed: sub_seed(cfg.seed, &format!("assemble/{tag}/train")),
        ..cfg.train.clone()
    }
    .with_freeze(variant.corpus_freeze());
    let log = pretrain_on_corpus(&mut model, corpus, &train_cfg)?;
    Ok(Assembled {
        variant,
        model,
        log,
        text_proxy,
    })
}
