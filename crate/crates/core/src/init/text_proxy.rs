//! Next-token pretraining of a backbone on a synthetic Markov token stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForecastModel, Linear, ParamGroup};
use crate::numeric::{no_grad, AdamState, Rng, Tensor};

use super::INIT_STD;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextProxySpec {
    pub vocab_size: usize,
    /// 1 or 2.
    pub markov_order: usize,
    /// Tokens in the training stream; a held-out stream of a tenth of this
    /// size is drawn separately.
    pub corpus_tokens: usize,
    pub pretrain_steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Successors with nonzero probability per previous symbol.
    pub support: usize,
    /// Symbols favoured by each symbol two steps back.
    pub boost_set: usize,
    pub boost: f64,
}

impl Default for TextProxySpec {
    fn default() -> Self {
        TextProxySpec {
            vocab_size: 256,
            markov_order: 2,
            corpus_tokens: 200_000,
            pretrain_steps: 400,
            lr: 1e-3,
            batch_size: 32,
            support: 8,
            boost_set: 64,
            boost: 4.0,
        }
    }
}

impl TextProxySpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.markov_order) {
            return Err(Error::Config(format!("markov_order must be 1 or 2, got {}", self.markov_order)));
        }
        if self.vocab_size < 2 || self.support == 0 || self.support > self.vocab_size || self.boost_set > self.vocab_size {
            return Err(Error::Config("text proxy vocabulary/support sizes are inconsistent".into()));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.boost >= 1.0) {
            return Err(Error::Config("text proxy lr, batch_size and boost must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse factored chain: `P(c | a, b) ∝ T[b][c] · boost(a, c)` where `T[b]`
/// has `support` nonzero entries and `boost(a, c)` is `boost` on a fixed
/// random subset for each `a`, else 1. Order 1 drops the boost term.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    pub vocab: usize,
    pub order: usize,
    /// `(successor, weight)` per previous symbol.
    pub successors: Vec<Vec<(usize, f64)>>,
    /// `favoured[a * vocab + c]`.
    pub favoured: Vec<bool>,
    pub boost: f64,
}

impl MarkovChain {
    pub fn new(spec: &TextProxySpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let v = spec.vocab_size;
        let mut symbols: Vec<usize> = (0..v).collect();
        let mut successors = Vec::with_capacity(v);
        for _ in 0..v {
            rng.shuffle(&mut symbols);
            successors.push(symbols[..spec.support].iter().map(|&c| (c, rng.uniform_in(0.2, 1.0))).collect());
        }
        let mut favoured = vec![false; v * v];
        if spec.markov_order == 2 {
            for a in 0..v {
                rng.shuffle(&mut symbols);
                for &c in &symbols[..spec.boost_set] {
                    favoured[a * v + c] = true;
                }
            }
        }
        Ok(MarkovChain {
            vocab: v,
            order: spec.markov_order,
            successors,
            favoured,
            boost: spec.boost,
        })
    }

    /// Normalized next-symbol distribution given the two previous symbols.
    pub fn next_dist(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        let mut w: Vec<(usize, f64)> = self.successors[b]
            .iter()
            .map(|&(c, p)| {
                let f = if self.order == 2 && self.favoured[a * self.vocab + c] { self.boost } else { 1.0 };
                (c, p * f)
            })
            .collect();
        let z: f64 = w.iter().map(|x| x.1).sum();
        w.iter_mut().for_each(|x| x.1 /= z);
        w
    }

    pub fn sample_stream(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        let (mut a, mut b) = (rng.below(self.vocab), rng.below(self.vocab));
        for _ in 0..n {
            let d = self.next_dist(a, b);
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut c = d[d.len() - 1].0;
            for &(s, p) in &d {
                acc += p;
                if u < acc {
                    c = s;
                    break;
                }
            }
            out.push(c);
            a = b;
            b = c;
        }
        out
    }
}

/// Perplexity of an add-one unigram model fitted on `train` and scored on `test`.
pub fn unigram_perplexity(train: &[usize], test: &[usize], vocab: usize) -> f64 {
    let mut counts = vec![1.0; vocab];
    for &t in train {
        counts[t] += 1.0;
    }
    let z: f64 = counts.iter().sum();
    let nll: f64 = test.iter().map(|&t| -(counts[t] / z).ln()).sum::<f64>() / test.len() as f64;
    nll.exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextProxyOutcome {
    pub model_ppl: f64,
    pub unigram_ppl: f64,
    pub steps: usize,
    pub final_train_loss: f64,
    /// The token embedding table `[vocab × d_model]` learned alongside the backbone.
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

struct Heads {
    embedding: Tensor,
    head: Linear,
}

impl Heads {
    fn logits(&self, model: &ForecastModel, tokens: &[usize], seq: usize) -> Result<Tensor> {
        let pos: Vec<usize> = (0..tokens.len()).map(|i| i % seq).collect();
        let x = self.embedding.gather_rows(tokens)?.add(&model.pos.gather_rows(&pos)?)?;
        self.head.forward(&model.forward_backbone(&x, seq)?)
    }
}

/// Trains a temporary token embedding and output head around the model's
/// backbone and positional table. Only those two groups of `model` change.
/// Fails when held-out perplexity does not beat the unigram baseline.
pub fn pretrain_text_proxy(model: &ForecastModel, spec: &TextProxySpec, seed: u64) -> Result<TextProxyOutcome> {
    spec.validate()?;
    let chain = MarkovChain::new(spec, &mut Rng::derive(seed, "text-proxy/chain"))?;
    let train = chain.sample_stream(spec.corpus_tokens, &mut Rng::derive(seed, "text-proxy/train"));
    let held = chain.sample_stream((spec.corpus_tokens / 10).max(1), &mut Rng::derive(seed, "text-proxy/heldout"));
    let seq = model.config().max_tokens;
    if train.len() < seq + 1 || held.len() < seq + 1 {
        return Err(Error::Config(format!(
            "text proxy corpus of {} tokens is shorter than one sequence of {}",
            spec.corpus_tokens,
            seq + 1
        )));
    }
    let d = model.config().d_model;
    let v = spec.vocab_size;
    let mut rng = Rng::derive(seed, "text-proxy/init");
    let heads = Heads {
        embedding: Tensor::param((0..v * d).map(|_| rng.normal(0.0, INIT_STD)).collect(), &[v, d])?,
        head: Linear::new(d, v, true),
    };
    heads.head.weight.data_mut().iter_mut().for_each(|w| *w = rng.normal(0.0, INIT_STD));

    let mut params: Vec<Tensor> = vec![heads.embedding.clone(), heads.head.weight.clone()];
    params.extend(heads.head.bias.clone());
    for p in model.named_params() {
        if matches!(p.group, ParamGroup::Backbone | ParamGroup::Pos) {
            params.push(p.tensor.clone());
        }
    }
    // Temporarily make the trained groups require gradients.
    let flags: Vec<bool> = params.iter().map(|p| p.requires_grad()).collect();
    params.iter().for_each(|p| p.set_requires_grad(true));

    let mut opt = AdamState::new(spec.lr, &params);
    let mut batch_rng = Rng::derive(seed, "text-proxy/batches");
    let mut final_train_loss = f64::NAN;
    let run = (|| -> Result<()> {
        for _ in 0..spec.pretrain_steps {
            let mut inputs = Vec::with_capacity(spec.batch_size * seq);
            let mut targets = Vec::with_capacity(spec.batch_size * seq);
            for _ in 0..spec.batch_size {
                let s = batch_rng.below(train.len() - seq);
                inputs.extend_from_slice(&train[s..s + seq]);
                targets.extend_from_slice(&train[s + 1..s + seq + 1]);
            }
            params.iter().for_each(|p| p.zero_grad());
            let loss = heads.logits(model, &inputs, seq)?.cross_entropy(&targets)?;
            loss.backward()?;
            opt.step(&params)?;
            final_train_loss = loss.item();
        }
        Ok(())
    })();
    params.iter().zip(&flags).for_each(|(p, &f)| p.set_requires_grad(f));
    run?;

    let model_ppl = {
        let _g = no_grad();
        let mut nll = 0.0;
        let mut n = 0usize;
        for chunk in held.windows(seq + 1).step_by(seq).collect::<Vec<_>>().chunks(64) {
            let inputs: Vec<usize> = chunk.iter().flat_map(|w| w[..seq].iter().copied()).collect();
            let targets: Vec<usize> = chunk.iter().flat_map(|w| w[1..].iter().copied()).collect();
            nll += heads.logits(model, &inputs, seq)?.cross_entropy(&targets)?.item() * targets.len() as f64;
            n += targets.len();
        }
        (nll / n as f64).exp()
    };
    let unigram_ppl = unigram_perplexity(&train, &held, v);
    if !(model_ppl < unigram_ppl) {
        return Err(Error::PretrainFailed { model_ppl, unigram_ppl });
    }
    Ok(TextProxyOutcome {
        model_ppl,
        unigram_ppl,
        steps: spec.pretrain_steps,
        final_train_loss,
        embedding: heads.embedding.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rows_are_distributions() {
        let spec = TextProxySpec {
            vocab_size: 32,
            boost_set: 8,
            ..Default::default()
        };
        let c = MarkovChain::new(&spec, &mut Rng::new(1)).unwrap();
        for a in 0..32 {
            for b in 0..32 {
                let d = c.next_dist(a, b);
                assert_eq!(d.len(), spec.support);
                assert!((d.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unigram_of_uniform_stream() {
        let s: Vec<usize> = (0..4000).map(|i| i % 4).collect();
        assert!((unigram_perplexity(&s, &s, 4) - 4.0).abs() < 1e-3);
    }

    #[test]
    fn bad_order_rejected() {
        let spec = TextProxySpec {
            markov_order: 3,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
