use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Transformer,
    LinearSingleLayer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Number of prototype rows the patch tokens attend over.
    pub n_prototypes: usize,
    /// Rows of the source embedding table the prototypes are mixed from.
    pub source_vocab: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub patch_size: usize,
    pub max_tokens: usize,
    pub hidden_mlp: usize,
    pub backbone: BackboneKind,
    #[serde(default)]
    pub vocab_adapter: Option<AdapterConfig>,
}

impl ModelConfig {
    pub fn new(n_layers: usize, d_model: usize, n_heads: usize, patch_size: usize, max_tokens: usize) -> Self {
        ModelConfig {
            n_layers,
            d_model,
            n_heads,
            d_ff: 4 * d_model,
            patch_size,
            max_tokens,
            hidden_mlp: d_model,
            backbone: BackboneKind::Transformer,
            vocab_adapter: None,
        }
    }

    /// 4 layers, d_model 64, patch 16: seven look-back patches of a 112-point
    /// window and one 16-point output patch.
    pub fn desk() -> Self {
        Self::new(4, 64, 4, 16, 16)
    }

    /// GPT-2 small geometry with 96-point patches.
    pub fn full() -> Self {
        Self::new(12, 768, 12, 96, 64)
    }

    /// Small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        Self::new(2, 8, 2, 4, 8)
    }

    /// Single linear backbone with the hidden width shrunk by 24x (768 -> 32
    /// at full scale), never below 8.
    pub fn linear_baseline(&self) -> Self {
        let d = self.d_model.div_ceil(24).max(8);
        ModelConfig {
            n_layers: 1,
            d_model: d,
            n_heads: 1,
            d_ff: 4 * d,
            patch_size: self.patch_size,
            max_tokens: self.max_tokens,
            hidden_mlp: d,
            backbone: BackboneKind::LinearSingleLayer,
            vocab_adapter: None,
        }
    }

    pub fn with_adapter(mut self, n_prototypes: usize, source_vocab: usize) -> Self {
        self.vocab_adapter = Some(AdapterConfig {
            n_prototypes,
            source_vocab,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} must be a positive multiple of n_heads {}", self.d_model, self.n_heads));
        }
        if self.patch_size == 0 {
            return bad("patch_size must be at least 1".into());
        }
        if self.max_tokens == 0 || self.hidden_mlp == 0 || self.d_ff == 0 {
            return bad("max_tokens, hidden_mlp and d_ff must be positive".into());
        }
        if self.backbone == BackboneKind::Transformer && self.n_layers == 0 {
            return bad("transformer backbone needs at least one layer".into());
        }
        if let Some(a) = self.vocab_adapter {
            if a.n_prototypes == 0 || a.source_vocab == 0 {
                return bad("adapter needs at least one prototype and one source row".into());
            }
        }
        Ok(())
    }

    /// Checks that a look-back of `lookback` points fits: divisible into
    /// patches, with room for at least one generated token.
    pub fn check_lookback(&self, lookback: usize) -> Result<usize> {
        if lookback == 0 || lookback % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "look-back {lookback} is not a positive multiple of patch size {}",
                self.patch_size
            )));
        }
        let tokens = lookback / self.patch_size;
        if self.max_tokens < tokens + 1 {
            return Err(Error::Config(format!(
                "max_tokens {} must be at least look-back tokens + 1 = {}",
                self.max_tokens,
                tokens + 1
            )));
        }
        Ok(tokens)
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<usize> {
        if horizon == 0 || horizon % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a positive multiple of patch size {}",
                self.patch_size
            )));
        }
        Ok(horizon / self.patch_size)
    }
}
