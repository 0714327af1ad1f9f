//! Adam with bias correction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moments sized for `params`, in order.
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        AdamState {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    /// One update of every parameter from its accumulated gradient. Parameters
    /// without a gradient (frozen, or unused by the loss) are left untouched.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.iter().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let grad = p.grad_ref();
            let Some(g) = grad.as_ref() else { continue };
            if g.len() != self.m[i].len() {
                return Err(Error::shape("adam_step", &[g.len()], &[self.m[i].len()]));
            }
            let mut w = p.data_mut();
            adam_update(
                &mut w,
                g,
                &mut self.m[i],
                &mut self.v[i],
                self.lr,
                (self.beta1, self.beta2, self.eps),
                (bc1, bc2),
            );
        }
        Ok(())
    }
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(params: &[Tensor], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|p| p.grad_ref().as_ref().map(|g| g.iter().map(|v| v * v).sum::<f64>()))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        params.iter().for_each(|p| p.scale_grad(max_norm / norm));
    }
    norm
}

/// Raw Adam recurrence on slices.
pub fn adam_update(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    (beta1, beta2, eps): (f64, f64, f64),
    (bc1, bc2): (f64, f64),
) {
    for j in 0..w.len() {
        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
        let m_hat = m[j] / bc1;
        let v_hat = v[j] / bc2;
        w[j] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_norm() {
        let p = Tensor::param(vec![0.0, 0.0], &[2]).unwrap();
        p.mul(&Tensor::new(vec![3.0, 4.0], &[2]).unwrap()).unwrap().sum().backward().unwrap();
        assert_eq!(clip_grad_norm(std::slice::from_ref(&p), 1.0), 5.0);
        let g = p.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let p = Tensor::param(vec![0.5, -1.5], &[2]).unwrap();
        let mut st = AdamState::new(0.1, std::slice::from_ref(&p));
        p.scale(0.0).sum().backward().unwrap();
        st.step(std::slice::from_ref(&p)).unwrap();
        assert_eq!(p.to_vec(), vec![0.5, -1.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let p = Tensor::param(vec![0.0], &[1]).unwrap();
        let mut st = AdamState::new(0.1, std::slice::from_ref(&p));
        p.sum().backward().unwrap();
        st.step(std::slice::from_ref(&p)).unwrap();
        assert!((p.item() + 0.1).abs() < 1e-9);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn frozen_param_is_skipped() {
        let p = Tensor::param(vec![1.0], &[1]).unwrap();
        let q = Tensor::param(vec![2.0], &[1]).unwrap();
        let params = vec![p.clone(), q.clone()];
        let mut st = AdamState::new(0.1, &params);
        q.set_requires_grad(false);
        p.mul(&q).unwrap().sum().backward().unwrap();
        st.step(&params).unwrap();
        assert_eq!(q.item().to_bits(), 2.0f64.to_bits());
        assert!(p.item() < 1.0);
    }
}
