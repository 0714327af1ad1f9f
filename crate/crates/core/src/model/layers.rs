//! Parameterized building blocks. Weights are stored `[in × out]` so a layer
//! is `x · W + b` on row-major token matrices.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{AttentionSpec, Tensor};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Pos,
    Backbone,
    Adapter,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Encoder,
        ParamGroup::Decoder,
        ParamGroup::Pos,
        ParamGroup::Backbone,
        ParamGroup::Adapter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Decoder => "decoder",
            ParamGroup::Pos => "pos",
            ParamGroup::Backbone => "backbone",
            ParamGroup::Adapter => "adapter",
        }
    }
}

/// How a tensor is initialized and whether it can ever be trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gain,
    Embedding,
    /// Fixed data carried with the model; never trainable.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct NamedParam {
    pub name: String,
    pub group: ParamGroup,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

pub(crate) fn weight(rows: usize, cols: usize) -> Tensor {
    Tensor::param(vec![0.0; rows * cols], &[rows, cols]).expect("shape")
}

pub(crate) fn vector(n: usize, value: f64) -> Tensor {
    Tensor::param(vec![value; n], &[n]).expect("shape")
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            weight: weight(d_in, d_out),
            bias: bias.then(|| vector(d_out, 0.0)),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight)?;
        match &self.bias {
            Some(b) => y.add_row(b),
            None => Ok(y),
        }
    }

    pub(crate) fn collect(&self, prefix: &str, group: ParamGroup, out: &mut Vec<NamedParam>) {
        out.push(NamedParam {
            name: format!("{prefix}.weight"),
            group,
            kind: ParamKind::Weight,
            tensor: self.weight.clone(),
        });
        if let Some(b) = &self.bias {
            out.push(NamedParam {
                name: format!("{prefix}.bias"),
                group,
                kind: ParamKind::Bias,
                tensor: b.clone(),
            });
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        LayerNorm {
            gain: vector(d, 1.0),
            bias: vector(d, 0.0),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layernorm(&self.gain, &self.bias, LN_EPS)
    }

    pub(crate) fn collect(&self, prefix: &str, group: ParamGroup, out: &mut Vec<NamedParam>) {
        out.push(NamedParam {
            name: format!("{prefix}.gain"),
            group,
            kind: ParamKind::Gain,
            tensor: self.gain.clone(),
        });
        out.push(NamedParam {
            name: format!("{prefix}.bias"),
            group,
            kind: ParamKind::Bias,
            tensor: self.bias.clone(),
        });
    }
}

/// Two linear layers with a GELU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Mlp {
            fc1: Linear::new(d_in, hidden, true),
            fc2: Linear::new(hidden, d_out, true),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu())
    }

    pub(crate) fn collect(&self, prefix: &str, group: ParamGroup, out: &mut Vec<NamedParam>) {
        self.fc1.collect(&format!("{prefix}.fc1"), group, out);
        self.fc2.collect(&format!("{prefix}.fc2"), group, out);
    }
}

/// Pre-LN GPT-2 block with causal multi-head self-attention.
#[derive(Clone, Debug)]
pub struct Block {
    pub ln_1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln_2: LayerNorm,
    pub fc: Linear,
    pub proj: Linear,
    pub n_heads: usize,
}

impl Block {
    pub fn new(d: usize, d_ff: usize, n_heads: usize) -> Self {
        Block {
            ln_1: LayerNorm::new(d),
            q: Linear::new(d, d, true),
            k: Linear::new(d, d, true),
            v: Linear::new(d, d, true),
            o: Linear::new(d, d, true),
            ln_2: LayerNorm::new(d),
            fc: Linear::new(d, d_ff, true),
            proj: Linear::new(d_ff, d, true),
            n_heads,
        }
    }

    /// `x` holds `rows / seq_len` sequences of `seq_len` tokens each.
    pub fn forward(&self, x: &Tensor, seq_len: usize) -> Result<Tensor> {
        let a = self.ln_1.forward(x)?;
        let spec = AttentionSpec {
            heads: self.n_heads,
            q_len: seq_len,
            kv_len: seq_len,
            causal: true,
        };
        let att = Tensor::attention(&self.q.forward(&a)?, &self.k.forward(&a)?, &self.v.forward(&a)?, spec)?;
        let x = x.add(&self.o.forward(&att)?)?;
        let m = self.ln_2.forward(&x)?;
        x.add(&self.proj.forward(&self.fc.forward(&m)?.gelu())?)
    }

    pub(crate) fn collect(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        let g = ParamGroup::Backbone;
        self.ln_1.collect(&format!("{prefix}.ln_1"), g, out);
        self.q.collect(&format!("{prefix}.attn.q"), g, out);
        self.k.collect(&format!("{prefix}.attn.k"), g, out);
        self.v.collect(&format!("{prefix}.attn.v"), g, out);
        self.o.collect(&format!("{prefix}.attn.o"), g, out);
        self.ln_2.collect(&format!("{prefix}.ln_2"), g, out);
        self.fc.collect(&format!("{prefix}.mlp.fc"), g, out);
        self.proj.collect(&format!("{prefix}.mlp.proj"), g, out);
    }
}
