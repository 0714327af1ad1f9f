//! The patch-encoder / backbone / patch-decoder forecaster.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use super::adapter::VocabAdapter;
use super::config::{BackboneKind, ModelConfig};
use super::layers::{weight, Block, LayerNorm, Linear, Mlp, NamedParam, ParamGroup, ParamKind};
use super::rollout::PatchPredictor;
use crate::error::{Error, Result};
use crate::numeric::{no_grad, Tensor};

#[derive(Clone, Debug)]
pub enum Backbone {
    Transformer { blocks: Vec<Block>, ln_f: LayerNorm },
    Linear(Linear),
}

/// Parameter values in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState(pub Vec<Vec<f64>>);

#[derive(Debug)]
pub struct ForecastModel {
    cfg: ModelConfig,
    pub encoder: Mlp,
    pub pos: Tensor,
    pub adapter: Option<VocabAdapter>,
    pub backbone: Backbone,
    pub decoder: Mlp,
    frozen: BTreeSet<ParamGroup>,
}

/// Stacks equal-length windows into a `[batch·tokens × patch]` matrix.
fn patch_matrix(windows: &[&[f64]], patch: usize) -> Result<(Tensor, usize)> {
    let len = windows.first().map(|w| w.len()).unwrap_or(0);
    if len == 0 || len % patch != 0 {
        return Err(Error::Config(format!("window length {len} is not a positive multiple of patch size {patch}")));
    }
    let mut data = Vec::with_capacity(len * windows.len());
    for w in windows {
        if w.len() != len {
            return Err(Error::shape("patch_matrix", &[len], &[w.len()]));
        }
        data.extend_from_slice(w);
    }
    let t = len / patch;
    Ok((Tensor::new(data, &[windows.len() * t, patch])?, t))
}

impl ForecastModel {
    /// Zero weights and unit layer-norm gains; see `init` for initializers.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let backbone = match cfg.backbone {
            BackboneKind::Transformer => Backbone::Transformer {
                blocks: (0..cfg.n_layers).map(|_| Block::new(d, cfg.d_ff, cfg.n_heads)).collect(),
                ln_f: LayerNorm::new(d),
            },
            BackboneKind::LinearSingleLayer => Backbone::Linear(Linear::new(d, d, true)),
        };
        Ok(ForecastModel {
            encoder: Mlp::new(cfg.patch_size, cfg.hidden_mlp, d),
            pos: weight(cfg.max_tokens, d),
            adapter: cfg.vocab_adapter.map(|a| VocabAdapter::new(a, d, cfg.n_heads)),
            backbone,
            decoder: Mlp::new(d, cfg.hidden_mlp, cfg.patch_size),
            frozen: BTreeSet::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn named_params(&self) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.encoder.collect("encoder", ParamGroup::Encoder, &mut out);
        out.push(NamedParam {
            name: "pos.embedding".into(),
            group: ParamGroup::Pos,
            kind: ParamKind::Embedding,
            tensor: self.pos.clone(),
        });
        if let Some(a) = &self.adapter {
            a.collect(&mut out);
        }
        match &self.backbone {
            Backbone::Transformer { blocks, ln_f } => {
                for (i, b) in blocks.iter().enumerate() {
                    b.collect(&format!("backbone.blocks.{i}"), &mut out);
                }
                ln_f.collect("backbone.ln_f", ParamGroup::Backbone, &mut out);
            }
            Backbone::Linear(l) => l.collect("backbone.linear", ParamGroup::Backbone, &mut out),
        }
        self.decoder.collect("decoder", ParamGroup::Decoder, &mut out);
        out
    }

    pub fn params_in(&self, group: ParamGroup) -> Vec<NamedParam> {
        self.named_params().into_iter().filter(|p| p.group == group).collect()
    }

    pub fn frozen_groups(&self) -> &BTreeSet<ParamGroup> {
        &self.frozen
    }

    /// Marks exactly `groups` as frozen; everything else (except buffers) trains.
    pub fn set_frozen(&mut self, groups: &BTreeSet<ParamGroup>) {
        for p in self.named_params() {
            let trainable = p.kind != ParamKind::Buffer && !groups.contains(&p.group);
            p.tensor.set_requires_grad(trainable);
        }
        self.frozen = groups.clone();
    }

    pub fn trainable_params(&self) -> Vec<Tensor> {
        self.named_params()
            .into_iter()
            .filter(|p| p.tensor.requires_grad())
            .map(|p| p.tensor)
            .collect()
    }

    pub fn zero_grad(&self) {
        self.named_params().iter().for_each(|p| p.tensor.zero_grad());
    }

    pub fn n_params(&self) -> usize {
        self.named_params().iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn snapshot(&self) -> ModelState {
        ModelState(self.named_params().iter().map(|p| p.tensor.to_vec()).collect())
    }

    pub fn restore(&self, state: &ModelState) -> Result<()> {
        let params = self.named_params();
        if params.len() != state.0.len() {
            return Err(Error::shape("restore", &[params.len()], &[state.0.len()]));
        }
        for (p, v) in params.iter().zip(&state.0) {
            let mut d = p.tensor.data_mut();
            if d.len() != v.len() {
                return Err(Error::shape("restore", &[d.len()], &[v.len()]));
            }
            d.copy_from_slice(v);
        }
        Ok(())
    }

    /// SHA-256 over every parameter's bits in canonical order.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.named_params() {
            h.update(p.name.as_bytes());
            for v in p.tensor.data().iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn group_state(&self, group: ParamGroup) -> Vec<Vec<f64>> {
        self.params_in(group).iter().map(|p| p.tensor.to_vec()).collect()
    }

    /// Independent copy with fresh tensors and the same freeze flags.
    pub fn deep_clone(&self) -> Result<ForecastModel> {
        let mut m = ForecastModel::new(self.cfg.clone())?;
        m.restore(&self.snapshot())?;
        m.set_frozen(&self.frozen);
        Ok(m)
    }

    /// Copies every tensor of `group` from `other`; names and shapes must match.
    pub fn copy_group_from(&self, other: &ForecastModel, group: ParamGroup) -> Result<()> {
        let mine = self.params_in(group);
        let theirs = other.params_in(group);
        if mine.len() != theirs.len() {
            return Err(Error::ConfigMismatch {
                expected: format!("{} tensors in {}", mine.len(), group.name()),
                found: format!("{}", theirs.len()),
            });
        }
        for (a, b) in mine.iter().zip(&theirs) {
            if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                return Err(Error::ConfigMismatch {
                    expected: format!("{} {:?}", a.name, a.tensor.shape()),
                    found: format!("{} {:?}", b.name, b.tensor.shape()),
                });
            }
            a.tensor.data_mut().copy_from_slice(&b.tensor.data());
        }
        Ok(())
    }

    fn check_tokens(&self, t: usize) -> Result<()> {
        if t > self.cfg.max_tokens {
            return Err(Error::Capacity {
                tokens: t,
                max_tokens: self.cfg.max_tokens,
            });
        }
        Ok(())
    }

    /// Patch rows `[batch·t × P]` to backbone input tokens `[batch·t × d]`:
    /// patch MLP, plus positional embedding, then the adapter when present.
    pub fn embed(&self, patches: &Tensor, batch: usize, t: usize) -> Result<Tensor> {
        self.check_tokens(t)?;
        let h = self.encoder.forward(patches)?;
        let idx: Vec<usize> = (0..batch).flat_map(|_| 0..t).collect();
        let x = h.add(&self.pos.gather_rows(&idx)?)?;
        match &self.adapter {
            Some(a) => a.forward(&x),
            None => Ok(x),
        }
    }

    /// Normalized window of `L` points to `[L/P × d_model]` tokens.
    pub fn encode_patches(&self, window: &[f64]) -> Result<Tensor> {
        let (patches, t) = patch_matrix(&[window], self.cfg.patch_size)?;
        self.embed(&patches, 1, t)
    }

    /// Runs the backbone over `rows / seq_len` sequences of `seq_len` tokens.
    pub fn forward_backbone(&self, tokens: &Tensor, seq_len: usize) -> Result<Tensor> {
        self.check_tokens(seq_len)?;
        match &self.backbone {
            Backbone::Transformer { blocks, ln_f } => {
                let mut x = tokens.clone();
                for b in blocks {
                    x = b.forward(&x, seq_len)?;
                }
                ln_f.forward(&x)
            }
            Backbone::Linear(l) => l.forward(tokens),
        }
    }

    /// Hidden rows `[n × d]` to patch rows `[n × P]`.
    pub fn decode(&self, hidden: &Tensor) -> Result<Tensor> {
        self.decoder.forward(hidden)
    }

    pub fn decode_next_patch(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        let h = Tensor::new(hidden.to_vec(), &[1, hidden.len()])?;
        Ok(self.decode(&h)?.to_vec())
    }

    /// Backbone outputs for a batch of equal-length normalized windows.
    pub fn hidden_states(&self, windows: &[&[f64]]) -> Result<(Tensor, usize)> {
        let (patches, t) = patch_matrix(windows, self.cfg.patch_size)?;
        let tokens = self.embed(&patches, windows.len(), t)?;
        Ok((self.forward_backbone(&tokens, t)?, t))
    }

    /// Teacher-forced next-patch MSE. Each sequence of `(T+1)·P` normalized
    /// points feeds its first `T` patches and predicts patches `2..=T+1`.
    pub fn forward_train(&self, sequences: &[&[f64]]) -> Result<Tensor> {
        let p = self.cfg.patch_size;
        let len = sequences.first().map(|s| s.len()).unwrap_or(0);
        if sequences.is_empty() || len % p != 0 || len / p < 2 {
            return Err(Error::Usage(format!(
                "training sequences need at least 2 whole patches of {p}, got length {len}"
            )));
        }
        let inputs: Vec<&[f64]> = sequences.iter().map(|s| &s[..len - p]).collect();
        let mut targets = Vec::with_capacity(sequences.len() * (len - p));
        for s in sequences {
            if s.len() != len {
                return Err(Error::shape("forward_train", &[len], &[s.len()]));
            }
            targets.extend_from_slice(&s[p..]);
        }
        let (hidden, _) = self.hidden_states(&inputs)?;
        self.decode(&hidden)?.mse_loss(&targets)
    }
}

impl PatchPredictor for ForecastModel {
    fn patch_size(&self) -> usize {
        self.cfg.patch_size
    }

    fn predict_next(&self, contexts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if contexts.is_empty() {
            return Ok(Vec::new());
        }
        let _guard = no_grad();
        let refs: Vec<&[f64]> = contexts.iter().map(|c| c.as_slice()).collect();
        let (hidden, t) = self.hidden_states(&refs)?;
        let last: Vec<usize> = (0..contexts.len()).map(|b| b * t + t - 1).collect();
        let out = self.decode(&hidden.gather_rows(&last)?)?.to_vec();
        Ok(out.chunks_exact(self.cfg.patch_size).map(|c| c.to_vec()).collect())
    }
}
