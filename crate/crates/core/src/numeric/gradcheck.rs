//! Central finite-difference gradient verification.
//!
//! The numeric side only ever calls the forward closure, so it stays
//! independent of every backward implementation it checks.

use super::tensor::{no_grad, Tensor};
use crate::error::Result;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of `loss` w.r.t. `params` against central
/// differences with step `h`. At most `per_tensor` entries of each tensor are
/// probed (evenly strided); `None` probes all of them.
pub fn check_gradients<F>(params: &[Tensor], loss: F, h: f64, per_tensor: Option<usize>) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor>,
{
    params.iter().for_each(Tensor::zero_grad);
    loss()?.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let _guard = no_grad();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (ti, p) in params.iter().enumerate() {
        let n = p.numel();
        let stride = match per_tensor {
            Some(k) if k > 0 && k < n => n.div_ceil(k),
            _ => 1,
        };
        for idx in (0..n).step_by(stride) {
            let orig = p.data()[idx];
            p.data_mut()[idx] = orig + h;
            let up = loss()?.item();
            p.data_mut()[idx] = orig - h;
            let down = loss()?.item();
            p.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti][idx];
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst_tensor = ti;
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
