//! Differentiable operations and their vector-Jacobian products.

use super::kernels::{dot, gemm};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

/// Geometry of a multi-head scaled dot-product attention call.
///
/// Queries are `batch·q_len` rows; keys and values are either `batch·kv_len`
/// rows (one block per query block) or `kv_len` rows shared by every block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionSpec {
    pub heads: usize,
    pub q_len: usize,
    pub kv_len: usize,
    pub causal: bool,
}

pub(crate) enum Op {
    MatMul(Tensor, Tensor),
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    AddRow(Tensor, Tensor),
    Scale(Tensor, f64),
    Gelu(Tensor),
    LayerNorm {
        x: Tensor,
        gain: Tensor,
        bias: Tensor,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax(Tensor),
    Attention {
        q: Tensor,
        k: Tensor,
        v: Tensor,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    GatherRows(Tensor, Vec<usize>),
    Reshape(Tensor),
    Sum(Tensor),
    Mean(Tensor),
    Mse(Tensor, Vec<f64>),
    CrossEntropy {
        logits: Tensor,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![a, b]
            }
            Op::Scale(x, _)
            | Op::Gelu(x)
            | Op::Softmax(x)
            | Op::GatherRows(x, _)
            | Op::Reshape(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::Mse(x, _) => vec![x],
            Op::LayerNorm { x, gain, bias, .. } => vec![x, gain, bias],
            Op::Attention { q, k, v, .. } => vec![q, k, v],
            Op::CrossEntropy { logits, .. } => vec![logits],
        }
    }

    /// Gradient contributions for each parent given the output gradient.
    pub(crate) fn backward(&self, out: &Tensor, g: &[f64]) -> Vec<(Tensor, Vec<f64>)> {
        let mut res = Vec::new();
        match self {
            Op::MatMul(a, b) => {
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if a.requires_grad() {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, false, &b.data(), true, &mut ga, false);
                    res.push((a.clone(), ga));
                }
                if b.requires_grad() {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, &a.data(), true, g, false, &mut gb, false);
                    res.push((b.clone(), gb));
                }
            }
            Op::Add(a, b) => {
                res.push((a.clone(), g.to_vec()));
                res.push((b.clone(), g.to_vec()));
            }
            Op::Sub(a, b) => {
                res.push((a.clone(), g.to_vec()));
                res.push((b.clone(), g.iter().map(|x| -x).collect()));
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let bd = b.data();
                    res.push((a.clone(), g.iter().zip(bd.iter()).map(|(x, y)| x * y).collect()));
                }
                if b.requires_grad() {
                    let ad = a.data();
                    res.push((b.clone(), g.iter().zip(ad.iter()).map(|(x, y)| x * y).collect()));
                }
            }
            Op::AddRow(x, bias) => {
                res.push((x.clone(), g.to_vec()));
                if bias.requires_grad() {
                    let n = bias.numel();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    res.push((bias.clone(), gb));
                }
            }
            Op::Scale(x, c) => res.push((x.clone(), g.iter().map(|v| v * c).collect())),
            Op::Gelu(x) => {
                let xd = x.data();
                let gx = xd.iter().zip(g).map(|(&v, &go)| go * gelu_grad(v)).collect();
                res.push((x.clone(), gx));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = gain.numel();
                let gd = gain.data();
                if x.requires_grad() {
                    let mut gx = vec![0.0; xhat.len()];
                    for (r, ((gr, xr), out_r)) in g
                        .chunks_exact(d)
                        .zip(xhat.chunks_exact(d))
                        .zip(gx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gd[j];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xr[j];
                        }
                        mean_dxhat /= d as f64;
                        mean_dxhat_xhat /= d as f64;
                        for j in 0..d {
                            let dxh = gr[j] * gd[j];
                            out_r[j] = rstd[r] * (dxh - mean_dxhat - xr[j] * mean_dxhat_xhat);
                        }
                    }
                    res.push((x.clone(), gx));
                }
                if gain.requires_grad() || bias.requires_grad() {
                    let mut gg = vec![0.0; d];
                    let mut gbias = vec![0.0; d];
                    for (gr, xr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += gr[j] * xr[j];
                            gbias[j] += gr[j];
                        }
                    }
                    res.push((gain.clone(), gg));
                    res.push((bias.clone(), gbias));
                }
            }
            Op::Softmax(x) => {
                let n = x.cols();
                let y = out.data();
                let mut gx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks_exact(n).zip(g.chunks_exact(n)).zip(gx.chunks_exact_mut(n)) {
                    let s = dot(yr, gr);
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - s);
                    }
                }
                res.push((x.clone(), gx));
            }
            Op::Attention { q, k, v, spec, probs } => {
                let (gq, gk, gv) = attention_backward(q, k, v, *spec, probs, g);
                res.push((q.clone(), gq));
                res.push((k.clone(), gk));
                res.push((v.clone(), gv));
            }
            Op::GatherRows(table, idx) => {
                let c = table.cols();
                let mut gt = vec![0.0; table.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    let src = &g[r * c..(r + 1) * c];
                    gt[i * c..(i + 1) * c].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
                res.push((table.clone(), gt));
            }
            Op::Reshape(x) => res.push((x.clone(), g.to_vec())),
            Op::Sum(x) => res.push((x.clone(), vec![g[0]; x.numel()])),
            Op::Mean(x) => {
                let n = x.numel();
                res.push((x.clone(), vec![g[0] / n as f64; n]));
            }
            Op::Mse(x, target) => {
                let n = target.len() as f64;
                let xd = x.data();
                let gx = xd.iter().zip(target).map(|(p, t)| g[0] * 2.0 * (p - t) / n).collect();
                res.push((x.clone(), gx));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let v = logits.cols();
                let n = targets.len() as f64;
                let mut gl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    gl[r * v + t] -= 1.0;
                }
                gl.iter_mut().for_each(|x| *x *= g[0] / n);
                res.push((logits.clone(), gl));
            }
        }
        res
    }
}

#[inline]
fn gelu_value(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x)
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (ad, bd) = (a.data(), b.data());
    ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect()
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data(), false, &other.data(), false, &mut out, false);
        Ok(Tensor::from_op(out, vec![m, n], Op::MatMul(self.clone(), other.clone())))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        check_same("add", self, other)?;
        let out = zip_with(self, other, |a, b| a + b);
        Ok(Tensor::from_op(out, self.shape().to_vec(), Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        check_same("sub", self, other)?;
        let out = zip_with(self, other, |a, b| a - b);
        Ok(Tensor::from_op(out, self.shape().to_vec(), Op::Sub(self.clone(), other.clone())))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        check_same("mul", self, other)?;
        let out = zip_with(self, other, |a, b| a * b);
        Ok(Tensor::from_op(out, self.shape().to_vec(), Op::Mul(self.clone(), other.clone())))
    }

    /// Adds a vector to every row (broadcast over the last dimension).
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let n = self.cols();
        if bias.numel() != n || self.shape().is_empty() {
            return Err(Error::shape("add_row", self.shape(), bias.shape()));
        }
        let mut out = self.to_vec();
        {
            let b = bias.data();
            for row in out.chunks_exact_mut(n) {
                row.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
            }
        }
        Ok(Tensor::from_op(out, self.shape().to_vec(), Op::AddRow(self.clone(), bias.clone())))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|x| x * c).collect();
        Tensor::from_op(out, self.shape().to_vec(), Op::Scale(self.clone(), c))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&self) -> Tensor {
        let out = self.data().iter().map(|&x| gelu_value(x)).collect();
        Tensor::from_op(out, self.shape().to_vec(), Op::Gelu(self.clone()))
    }

    /// Normalizes every vector along the last dimension, then applies `gain` and `bias`.
    pub fn layernorm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let d = self.cols();
        if gain.numel() != d || bias.numel() != d || self.shape().is_empty() {
            return Err(Error::shape("layernorm", self.shape(), gain.shape()));
        }
        let rows = self.rows();
        let mut xhat = vec![0.0; rows * d];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        {
            let x = self.data();
            let (g, b) = (gain.data(), bias.data());
            for r in 0..rows {
                let xr = &x[r * d..(r + 1) * d];
                let mean = xr.iter().sum::<f64>() / d as f64;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let rs = 1.0 / (var + eps).sqrt();
                rstd[r] = rs;
                for j in 0..d {
                    let h = (xr[j] - mean) * rs;
                    xhat[r * d + j] = h;
                    out[r * d + j] = h * g[j] + b[j];
                }
            }
        }
        let op = Op::LayerNorm {
            x: self.clone(),
            gain: gain.clone(),
            bias: bias.clone(),
            xhat,
            rstd,
        };
        Ok(Tensor::from_op(out, self.shape().to_vec(), op))
    }

    /// Row-wise softmax over the last dimension, stabilized by the row max.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let n = self.cols();
        let x = self.data();
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric {
                op: "softmax_rows",
                msg: "NaN in input".into(),
            });
        }
        let mut out = vec![0.0; x.len()];
        for (xr, or) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            softmax_into(xr, or);
        }
        drop(x);
        Ok(Tensor::from_op(out, self.shape().to_vec(), Op::Softmax(self.clone())))
    }

    /// Multi-head scaled dot-product attention over row blocks. Inputs are
    /// already projected; `d` must be divisible by `spec.heads`.
    pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, spec: AttentionSpec) -> Result<Tensor> {
        let d = q.cols();
        if k.cols() != d || v.cols() != d || k.shape() != v.shape() {
            return Err(Error::shape("attention", q.shape(), k.shape()));
        }
        if spec.heads == 0 || d % spec.heads != 0 {
            return Err(Error::Config(format!("d={d} not divisible by heads={}", spec.heads)));
        }
        if spec.q_len == 0 || q.rows() % spec.q_len != 0 || spec.kv_len == 0 || k.rows() % spec.kv_len != 0 {
            return Err(Error::shape("attention", q.shape(), &[spec.q_len, spec.kv_len]));
        }
        let bq = q.rows() / spec.q_len;
        let bk = k.rows() / spec.kv_len;
        if bk != bq && bk != 1 {
            return Err(Error::shape("attention", q.shape(), k.shape()));
        }
        if spec.causal && spec.q_len != spec.kv_len {
            return Err(Error::Config("causal attention requires q_len == kv_len".into()));
        }
        let (tq, tk, heads) = (spec.q_len, spec.kv_len, spec.heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; bq * heads * tq * tk];
        let mut out = vec![0.0; q.numel()];
        {
            let (qd, kd, vd) = (q.data(), k.data(), v.data());
            let mut scores = vec![0.0; tk];
            for b in 0..bq {
                let kb = if bk == 1 { 0 } else { b };
                for h in 0..heads {
                    let off = h * dh;
                    for i in 0..tq {
                        let qi = &qd[(b * tq + i) * d + off..][..dh];
                        let jmax = if spec.causal { i + 1 } else { tk };
                        for j in 0..jmax {
                            let kj = &kd[(kb * tk + j) * d + off..][..dh];
                            scores[j] = dot(qi, kj) * scale;
                        }
                        let p = &mut probs[((b * heads + h) * tq + i) * tk..][..tk];
                        softmax_into(&scores[..jmax], &mut p[..jmax]);
                        let o = &mut out[(b * tq + i) * d + off..][..dh];
                        for j in 0..jmax {
                            let vj = &vd[(kb * tk + j) * d + off..][..dh];
                            let pj = p[j];
                            o.iter_mut().zip(vj).for_each(|(a, b)| *a += pj * b);
                        }
                    }
                }
            }
        }
        let op = Op::Attention {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            spec,
            probs,
        };
        Ok(Tensor::from_op(out, q.shape().to_vec(), op))
    }

    /// Selects rows of a 2-D table by index (embedding lookup).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        if self.shape().len() != 2 {
            return Err(Error::shape("gather_rows", self.shape(), &[idx.len()]));
        }
        let (r, c) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Usage(format!("gather_rows index {bad} out of range for {r} rows")));
        }
        let data = self.data();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&data[i * c..(i + 1) * c]);
        }
        drop(data);
        Ok(Tensor::from_op(out, vec![idx.len(), c], Op::GatherRows(self.clone(), idx.to_vec())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), Op::Reshape(self.clone())))
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        let s = self.data().iter().sum::<f64>() / n;
        Tensor::from_op(vec![s], vec![], Op::Mean(self.clone()))
    }

    /// Mean squared error against a constant target of the same length.
    pub fn mse_loss(&self, target: &[f64]) -> Result<Tensor> {
        if target.len() != self.numel() || target.is_empty() {
            return Err(Error::shape("mse_loss", self.shape(), &[target.len()]));
        }
        let sse: f64 = self.data().iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
        let loss = sse / target.len() as f64;
        Ok(Tensor::from_op(vec![loss], vec![], Op::Mse(self.clone(), target.to_vec())))
    }

    /// Mean next-token negative log-likelihood of `targets` under row logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor> {
        let v = self.cols();
        if self.rows() != targets.len() || targets.is_empty() {
            return Err(Error::shape("cross_entropy", self.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Usage(format!("target {bad} outside vocabulary of {v}")));
        }
        let x = self.data();
        let mut probs = vec![0.0; x.len()];
        let mut nll = 0.0;
        for (r, (xr, pr)) in x.chunks_exact(v).zip(probs.chunks_exact_mut(v)).enumerate() {
            let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = xr.iter().map(|a| (a - max).exp()).sum();
            let lse = max + z.ln();
            for j in 0..v {
                pr[j] = (xr[j] - lse).exp();
            }
            nll += lse - xr[targets[r]];
        }
        drop(x);
        let loss = nll / targets.len() as f64;
        let op = Op::CrossEntropy {
            logits: self.clone(),
            targets: targets.to_vec(),
            probs,
        };
        Ok(Tensor::from_op(vec![loss], vec![], op))
    }
}

fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    spec: AttentionSpec,
    probs: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = q.cols();
    let (tq, tk, heads) = (spec.q_len, spec.kv_len, spec.heads);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let bq = q.rows() / tq;
    let bk = k.rows() / tk;
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut gq = vec![0.0; qd.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gv = vec![0.0; vd.len()];
    let mut dp = vec![0.0; tk];
    for b in 0..bq {
        let kb = if bk == 1 { 0 } else { b };
        for h in 0..heads {
            let off = h * dh;
            for i in 0..tq {
                let jmax = if spec.causal { i + 1 } else { tk };
                let p = &probs[((b * heads + h) * tq + i) * tk..][..tk];
                let go = &g[(b * tq + i) * d + off..][..dh];
                let mut s = 0.0;
                for j in 0..jmax {
                    let vrow = (kb * tk + j) * d + off;
                    dp[j] = dot(go, &vd[vrow..vrow + dh]);
                    s += p[j] * dp[j];
                    let pj = p[j];
                    gv[vrow..vrow + dh].iter_mut().zip(go).for_each(|(a, b)| *a += pj * b);
                }
                let qrow = (b * tq + i) * d + off;
                for j in 0..jmax {
                    let ds = p[j] * (dp[j] - s) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let krow = (kb * tk + j) * d + off;
                    for c in 0..dh {
                        gq[qrow + c] += ds * kd[krow + c];
                        gk[krow + c] += ds * qd[qrow + c];
                    }
                }
            }
        }
    }
    (gq, gk, gv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::new(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let a = t(&[1., 2., 3., 4.], &[2, 2]);
        let b = t(&[5., 6.], &[2, 1]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![17., 39.]);
    }

    #[test]
    fn matmul_identity() {
        let i = t(&[1., 0., 0., 1.], &[2, 2]);
        let m = t(&[0.3, -1.2, 7.0, 2.5], &[2, 2]);
        assert_eq!(i.matmul(&m).unwrap().to_vec(), m.to_vec());
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = t(&[1., 2., 3.], &[1, 3]);
        let b = t(&[1., 2.], &[2, 1]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 1]"), "{msg}");
    }

    #[test]
    fn sum_of_matmul_grad_is_ones_times_bt() {
        let a = Tensor::param(vec![1., 2., 3., 4., 5., 6.], &[2, 3]).unwrap();
        let b = t(&[0.5, -1., 2., 0.25, 3., -0.75], &[3, 2]);
        a.matmul(&b).unwrap().sum().backward().unwrap();
        // ones(2x2) · Bᵀ: each row of the gradient holds the row sums of B.
        let row: Vec<f64> = b.data().chunks(2).map(|r| r[0] + r[1]).collect();
        let want: Vec<f64> = row.iter().chain(row.iter()).cloned().collect();
        assert_eq!(a.grad().unwrap(), want);
    }

    #[test]
    fn softmax_examples() {
        let x = t(&[2.0, 2.0, 2.0, 2.0, 0.0, 3f64.ln()], &[2, 3]);
        let x = x.reshape(&[3, 2]).unwrap();
        let y = x.softmax_rows().unwrap().to_vec();
        assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
        assert!((y[4] - 0.25).abs() < 1e-15 && (y[5] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_nan() {
        let x = t(&[f64::NAN, 1.0], &[1, 2]);
        assert!(matches!(x.softmax_rows(), Err(Error::Numeric { .. })));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = t(&[0.1, -2.0, 3.3, 0.7], &[1, 4]);
        let shifted = t(&[10.1, 8.0, 13.3, 10.7], &[1, 4]);
        let (a, b) = (x.softmax_rows().unwrap().to_vec(), shifted.softmax_rows().unwrap().to_vec());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn layernorm_of_constant_is_zero() {
        let x = t(&[4.0; 6], &[2, 3]);
        let y = x.layernorm(&t(&[1.0; 3], &[3]), &t(&[0.0; 3], &[3]), 1e-5).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gelu_values() {
        assert_eq!(t(&[0.0], &[1]).gelu().item(), 0.0);
        assert!((t(&[10.0], &[1]).gelu().item() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn single_key_attention_passes_value_through() {
        let q = t(&[0.3, -0.1, 2.0, 0.5], &[1, 4]);
        let k = t(&[1.0, 2.0, 3.0, 4.0], &[1, 4]);
        let v = t(&[-1.0, 0.5, 0.25, 8.0], &[1, 4]);
        let spec = AttentionSpec {
            heads: 2,
            q_len: 1,
            kv_len: 1,
            causal: true,
        };
        let out = Tensor::attention(&q, &k, &v, spec).unwrap();
        assert_eq!(out.to_vec(), v.to_vec());
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_v() {
        let x = t(&[0.0; 8], &[2, 4]);
        let l = x.cross_entropy(&[1, 3]).unwrap().item();
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }
}
