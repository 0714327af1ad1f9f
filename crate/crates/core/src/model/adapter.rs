//! Cross-attention from patch tokens onto a learned set of prototypes mixed
//! from a fixed source embedding table.

use super::config::AdapterConfig;
use super::layers::{weight, Linear, NamedParam, ParamGroup, ParamKind};
use crate::error::{Error, Result};
use crate::numeric::{AttentionSpec, Tensor};

#[derive(Clone, Debug)]
pub struct VocabAdapter {
    /// `[n_prototypes × source_vocab]` mixing coefficients.
    pub combination: Tensor,
    /// `[source_vocab × d_model]`, fixed.
    pub source: Tensor,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
}

impl VocabAdapter {
    pub fn new(cfg: AdapterConfig, d_model: usize, n_heads: usize) -> Self {
        let source = Tensor::new(vec![0.0; cfg.source_vocab * d_model], &[cfg.source_vocab, d_model])
            .expect("shape");
        VocabAdapter {
            combination: weight(cfg.n_prototypes, cfg.source_vocab),
            source,
            q: Linear::new(d_model, d_model, false),
            k: Linear::new(d_model, d_model, false),
            v: Linear::new(d_model, d_model, false),
            o: Linear::new(d_model, d_model, false),
            n_heads,
        }
    }

    pub fn n_prototypes(&self) -> usize {
        self.combination.shape()[0]
    }

    /// Replaces the source embedding table (e.g. with a pretrained token table).
    pub fn set_source(&self, table: &[f64]) -> Result<()> {
        let mut src = self.source.data_mut();
        if table.len() != src.len() {
            return Err(Error::shape("set_source", &[table.len()], &[src.len()]));
        }
        src.copy_from_slice(table);
        Ok(())
    }

    /// `[n_prototypes × d_model]`.
    pub fn prototypes(&self) -> Result<Tensor> {
        self.combination.matmul(&self.source)
    }

    pub fn forward(&self, tokens: &Tensor) -> Result<Tensor> {
        let protos = self.prototypes()?;
        let spec = AttentionSpec {
            heads: self.n_heads,
            q_len: 1,
            kv_len: protos.shape()[0],
            causal: false,
        };
        let att = Tensor::attention(
            &self.q.forward(tokens)?,
            &self.k.forward(&protos)?,
            &self.v.forward(&protos)?,
            spec,
        )?;
        self.o.forward(&att)
    }

    pub(crate) fn collect(&self, out: &mut Vec<NamedParam>) {
        let g = ParamGroup::Adapter;
        out.push(NamedParam {
            name: "adapter.combination".into(),
            group: g,
            kind: ParamKind::Weight,
            tensor: self.combination.clone(),
        });
        out.push(NamedParam {
            name: "adapter.source_embedding".into(),
            group: g,
            kind: ParamKind::Buffer,
            tensor: self.source.clone(),
        });
        self.q.collect("adapter.q", g, out);
        self.k.collect("adapter.k", g, out);
        self.v.collect("adapter.v", g, out);
        self.o.collect("adapter.o", g, out);
    }
}
