//! Loss decomposition and input-horizon analytics, law fitting and the
//! samples-to-match crossing point.

mod fit;
mod lambert;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use fit::{fit_params, load_observations_csv, planted_observations, FitReport, FittedLaw, Observation, ALPHA_STARTS, COEF_STARTS, N_FREE};
pub use lambert::lambert_w;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingLawParams {
    /// Subregion count, a proxy for parameter count.
    pub n: f64,
    /// Dataset size.
    pub d_data: f64,
    pub d_f: f64,
    /// Input horizon dimension.
    pub d_i: f64,
    /// Intrinsic dimension of the prediction window.
    pub d_i_s: f64,
    /// Forecast horizon length.
    pub s: f64,
    pub alpha_z: f64,
    pub k1: f64,
    pub k2: f64,
    pub eta: f64,
    pub lambda0: f64,
    pub sigma_m_sq: f64,
    /// `K1²π²(1−η)λ0 / K2²`, kept in sync by [`ScalingLawParams::with_c0`].
    pub c0: f64,
}

impl ScalingLawParams {
    /// Every field 1 except `eta = 0`.
    pub fn unit() -> Self {
        ScalingLawParams {
            n: 1.0,
            d_data: 1.0,
            d_f: 1.0,
            d_i: 1.0,
            d_i_s: 1.0,
            s: 1.0,
            alpha_z: 2.0,
            k1: 1.0,
            k2: 1.0,
            eta: 0.0,
            lambda0: 1.0,
            sigma_m_sq: 1.0,
            c0: 0.0,
        }
        .with_c0()
    }

    pub fn derived_c0(&self) -> f64 {
        self.k1 * self.k1 * PI * PI * (1.0 - self.eta) * self.lambda0 / (self.k2 * self.k2)
    }

    pub fn with_c0(mut self) -> Self {
        self.c0 = self.derived_c0();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.n, self.d_data, self.d_f, self.d_i, self.d_i_s, self.s, self.k1, self.k2, self.lambda0];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("sizes, dimensions, K1, K2 and lambda0 must be positive".into()));
        }
        if !(self.alpha_z > 0.0) || self.alpha_z == 1.0 {
            return Err(Error::Domain(format!("alpha_z must be positive and not 1, got {}", self.alpha_z)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Domain(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if !(self.sigma_m_sq >= 0.0) {
            return Err(Error::Domain("noise variance must be non-negative".into()));
        }
        let c0 = self.derived_c0();
        if (c0 - self.c0).abs() > 1e-12 * c0.abs().max(1.0) {
            return Err(Error::Domain(format!("stored C0 {} differs from derived {c0}", self.c0)));
        }
        Ok(())
    }
}

fn bayes_first_term(p: &ScalingLawParams) -> Result<f64> {
    if p.alpha_z == 1.0 {
        return Err(Error::Domain("alpha_z = 1 is a singularity of the Bayesian loss".into()));
    }
    if !(p.d_i > 0.0) {
        return Err(Error::Domain(format!("input dimension must be positive, got {}", p.d_i)));
    }
    Ok(p.k1 * p.k1 * (1.0 - p.eta) * p.lambda0 / ((p.alpha_z - 1.0) * p.d_i.powf(p.alpha_z - 1.0)))
}

/// `K1²(1−η)λ0 / ((α_Z−1)·d_I^{α_Z−1}) + η·σ_M²·S²·d_I(S)`.
pub fn bayesian_loss(p: &ScalingLawParams) -> Result<f64> {
    Ok(bayes_first_term(p)? + p.eta * p.sigma_m_sq * p.s * p.s * p.d_i_s)
}

/// `K2²·d²·N^{−4/d}/(4π²) + K1²(1−η)λ0/((α_Z−1)·d_I^{α_Z−1}) + N·d_I/D·σ_M²·S²·d_I(S)`.
pub fn total_loss(p: &ScalingLawParams, d: f64) -> Result<f64> {
    if !(p.n > 0.0) || !(p.d_data > 0.0) || !(d > 0.0) {
        return Err(Error::Domain(format!(
            "N, D and d must be positive, got N={}, D={}, d={d}",
            p.n, p.d_data
        )));
    }
    let approx = p.k2 * p.k2 * d * d * p.n.powf(-4.0 / d) / (4.0 * PI * PI);
    let noise = p.n * p.d_i / p.d_data * p.sigma_m_sq * p.s * p.s * p.d_i_s;
    Ok(approx + bayes_first_term(p)? + noise)
}

/// Optimal input horizon when dataset size can be ignored: the exact
/// Lambert-W value and the small-argument approximation `W(x) ≈ x`.
pub fn optimal_horizon_small_model(p: &ScalingLawParams, n: f64) -> Result<(f64, f64)> {
    if !(n > 1.0) {
        return Err(Error::Domain(format!("N must exceed 1, got {n}")));
    }
    if !(p.alpha_z > 0.0) {
        return Err(Error::Domain(format!("alpha_z must be positive, got {}", p.alpha_z)));
    }
    if !(p.c0 > 0.0) {
        return Err(Error::Domain(format!("C0 must be positive, got {}", p.c0)));
    }
    let a = p.alpha_z;
    let arg = 4.0 / (a * p.c0.powf(1.0 / a)) * n.ln().powf(1.0 + 1.0 / a);
    Ok((lambert_w(arg)?, arg))
}

/// `(K1²(1−η)λ0·D / (N·σ_M²·S²·d_I(S)))^{1/α_Z}`.
pub fn optimal_horizon_noisy(p: &ScalingLawParams, d_data: f64, n: f64) -> Result<f64> {
    let denom = n * p.sigma_m_sq * p.s * p.s * p.d_i_s;
    if denom == 0.0 {
        return Err(Error::Domain("noise variance, N, S and d_I(S) must be nonzero".into()));
    }
    if !(p.alpha_z > 0.0) {
        return Err(Error::Domain(format!("alpha_z must be positive, got {}", p.alpha_z)));
    }
    let ratio = p.k1 * p.k1 * (1.0 - p.eta) * p.lambda0 * d_data / denom;
    if !(ratio >= 0.0) {
        return Err(Error::Domain(format!("optimal horizon ratio is negative: {ratio}")));
    }
    Ok(ratio.powf(1.0 / p.alpha_z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// `+∞` when the curve never reaches the target.
    pub n_samples: f64,
    pub reached: bool,
}

/// Smallest sample count at which the curve reaches `target_mse`, with MSE
/// interpolated linearly in `ln(n_samples)` between points.
pub fn samples_to_match(curve: &[(f64, f64)], target_mse: f64) -> Result<Crossing> {
    if curve.len() < 2 {
        return Err(Error::Usage("samples_to_match needs at least two curve points".into()));
    }
    if curve.iter().any(|&(n, m)| !(n > 0.0) || !m.is_finite()) {
        return Err(Error::Usage("curve sample counts must be positive and MSEs finite".into()));
    }
    if curve.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::Usage("curve must be sorted by strictly increasing sample count".into()));
    }
    if curve[0].1 <= target_mse {
        return Ok(Crossing {
            n_samples: curve[0].0,
            reached: true,
        });
    }
    for w in curve.windows(2) {
        let ((n0, m0), (n1, m1)) = (w[0], w[1]);
        if m0 > target_mse && m1 <= target_mse {
            let t = (m0 - target_mse) / (m0 - m1);
            return Ok(Crossing {
                n_samples: (n0.ln() + t * (n1.ln() - n0.ln())).exp(),
                reached: true,
            });
        }
    }
    Ok(Crossing {
        n_samples: f64::INFINITY,
        reached: false,
    })
}
