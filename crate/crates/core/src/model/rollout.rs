//! Autoregressive multi-patch forecasting.

use crate::data::Norm;
use crate::error::{Error, Result};

/// Anything that maps normalized contexts to their next normalized patch.
pub trait PatchPredictor {
    fn patch_size(&self) -> usize;

    /// One next patch per context; all contexts share one length.
    fn predict_next(&self, contexts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

/// Rolls normalized contexts forward `horizon` points by feeding each
/// predicted patch back as input.
pub fn rollout<M: PatchPredictor + ?Sized>(model: &M, contexts: &[Vec<f64>], horizon: usize) -> Result<Vec<Vec<f64>>> {
    let p = model.patch_size();
    if horizon == 0 || horizon % p != 0 {
        return Err(Error::Config(format!(
            "horizon {horizon} is not a positive multiple of patch size {p}"
        )));
    }
    let mut ctx: Vec<Vec<f64>> = contexts.to_vec();
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); contexts.len()];
    for _ in 0..horizon / p {
        let next = model.predict_next(&ctx)?;
        for ((c, o), n) in ctx.iter_mut().zip(out.iter_mut()).zip(next) {
            if n.len() != p {
                return Err(Error::shape("rollout", &[p], &[n.len()]));
            }
            o.extend_from_slice(&n);
            c.extend_from_slice(&n);
        }
    }
    Ok(out)
}

/// Forecasts `horizon` raw values from raw look-back windows: each window is
/// instance-normalized, rolled out, and de-normalized with its own statistics.
pub fn forecast_batch<M: PatchPredictor + ?Sized>(model: &M, windows: &[&[f64]], horizon: usize) -> Result<Vec<Vec<f64>>> {
    let norms: Vec<Norm> = windows.iter().map(|w| Norm::of(w)).collect();
    let ctx: Vec<Vec<f64>> = windows.iter().zip(&norms).map(|(w, n)| n.normalize(w)).collect();
    let preds = rollout(model, &ctx, horizon)?;
    Ok(preds.iter().zip(&norms).map(|(p, n)| n.denormalize(p)).collect())
}

pub fn forecast<M: PatchPredictor + ?Sized>(model: &M, window: &[f64], horizon: usize) -> Result<Vec<f64>> {
    Ok(forecast_batch(model, &[window], horizon)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Repeats the last input patch.
    struct LastPatch(usize);

    impl PatchPredictor for LastPatch {
        fn patch_size(&self) -> usize {
            self.0
        }
        fn predict_next(&self, contexts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
            Ok(contexts.iter().map(|c| c[c.len() - self.0..].to_vec()).collect())
        }
    }

    #[test]
    fn denormalization_inverts_normalization() {
        let window: Vec<f64> = (0..12).map(|i| 3.0 + (i as f64 * 0.7).sin() * 5.0).collect();
        let out = forecast(&LastPatch(4), &window, 4).unwrap();
        for (a, b) in out.iter().zip(&window[8..]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn horizon_must_be_patch_multiple() {
        assert!(matches!(forecast(&LastPatch(4), &[0.0; 8], 6), Err(Error::Config(_))));
    }

    #[test]
    fn longer_rollout_extends_shorter() {
        let window: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let short = forecast(&LastPatch(4), &window, 4).unwrap();
        let long = forecast(&LastPatch(4), &window, 12).unwrap();
        assert_eq!(&long[..4], &short[..]);
    }
}
