//! Log-space Levenberg–Marquardt fit of the total-loss law.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Rng;

/// One measured training loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n_params: f64,
    pub n_data: f64,
    pub horizon: f64,
    pub d: f64,
    pub loss: f64,
}

/// The identifiable combinations of the total-loss law:
///
/// `loss = A·d²·N^{−4/d}/(4π²) + B/((α−1)·d_I^{α−1}) + C·N·d_I/D`
///
/// with `A = K2²`, `B = K1²(1−η)λ0` and `C = σ_M²·S²·d_I(S)`. `K1²` cannot be
/// separated from `(1−η)λ0`, nor `σ_M²` from `S²·d_I(S)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedLaw {
    pub k2_sq: f64,
    pub k1_sq_damped_lambda: f64,
    pub noise_term: f64,
    pub alpha_z: f64,
}

impl FittedLaw {
    pub fn predict(&self, o: &Observation) -> f64 {
        terms(&self.theta(), o).0
    }

    fn theta(&self) -> [f64; 4] {
        [self.k2_sq.ln(), self.k1_sq_damped_lambda.ln(), self.noise_term.ln(), self.alpha_z]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub law: FittedLaw,
    /// Root-mean-square of `ln(predicted) − ln(observed)`.
    pub rms_log_residual: f64,
    pub n_observations: usize,
    pub n_starts: usize,
}

pub const N_FREE: usize = 4;
pub const ALPHA_STARTS: [f64; 4] = [0.5, 1.5, 2.0, 3.0];
pub const COEF_STARTS: [f64; 4] = [1e-3, 1e-1, 1e1, 1e3];

/// Predicted loss and its gradient with respect to `(ln A, ln B, ln C, α)`.
fn terms(theta: &[f64; 4], o: &Observation) -> (f64, [f64; 4]) {
    let (a, b, c, alpha) = (theta[0].exp(), theta[1].exp(), theta[2].exp(), theta[3]);
    let t1 = a * o.d * o.d * o.n_params.powf(-4.0 / o.d) / (4.0 * PI * PI);
    let am1 = alpha - 1.0;
    let h = 1.0 / (am1 * o.horizon.powf(am1));
    let t2 = b * h;
    let t3 = c * o.n_params * o.horizon / o.n_data;
    let dt2 = t2 * (-1.0 / am1 - o.horizon.ln());
    (t1 + t2 + t3, [t1, t2, t3, dt2])
}

fn residuals(theta: &[f64; 4], obs: &[Observation]) -> Option<(Vec<f64>, Vec<[f64; 4]>)> {
    let mut r = Vec::with_capacity(obs.len());
    let mut j = Vec::with_capacity(obs.len());
    for o in obs {
        let (p, g) = terms(theta, o);
        if !(p > 0.0 && p.is_finite()) {
            return None;
        }
        r.push(p.ln() - o.loss.ln());
        j.push(g.map(|v| v / p));
    }
    Some((r, j))
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn levenberg_marquardt(mut theta: [f64; 4], obs: &[Observation]) -> Option<([f64; 4], f64)> {
    let (mut r, mut jac) = residuals(&theta, obs)?;
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (ri, gi) in r.iter().zip(&jac) {
            let g = Vector4::from_row_slice(gi);
            jtj += g * g.transpose();
            jtr += g * *ri;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2], theta[3] + step[3]];
            if cand[3] <= 0.0 || (cand[3] - 1.0).abs() < 1e-9 {
                lambda *= 10.0;
                continue;
            }
            match residuals(&cand, obs) {
                Some((nr, nj)) if cost(&nr) < c => {
                    let small = step.amax() < 1e-14 * (1.0 + theta.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                    let nc = cost(&nr);
                    let rel = (c - nc) / c.max(1e-300);
                    theta = cand;
                    r = nr;
                    jac = nj;
                    c = nc;
                    lambda = (lambda * 0.3).max(1e-15);
                    improved = true;
                    if small || rel < 1e-16 {
                        return Some((theta, c));
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    Some((theta, c))
}

/// Multi-start fit over `α ∈ ALPHA_STARTS` and each coefficient in
/// `COEF_STARTS`; returns the start with the smallest log residual.
pub fn fit_params(obs: &[Observation]) -> Result<FitReport> {
    if obs.len() < N_FREE {
        return Err(Error::Underdetermined {
            observations: obs.len(),
            parameters: N_FREE,
        });
    }
    if let Some(o) = obs
        .iter()
        .find(|o| !(o.n_params > 0.0 && o.n_data > 0.0 && o.horizon > 0.0 && o.d > 0.0 && o.loss > 0.0))
    {
        return Err(Error::Domain(format!("observation values must be positive: {o:?}")));
    }
    let mut best: Option<([f64; 4], f64)> = None;
    let mut n_starts = 0;
    for &alpha in &ALPHA_STARTS {
        for &a in &COEF_STARTS {
            for &b in &COEF_STARTS {
                for &c in &COEF_STARTS {
                    n_starts += 1;
                    let Some((theta, cst)) = levenberg_marquardt([a.ln(), b.ln(), c.ln(), alpha], obs) else {
                        continue;
                    };
                    if best.is_none_or(|(_, bc)| cst < bc) {
                        best = Some((theta, cst));
                    }
                }
            }
        }
    }
    let (theta, c) = best.ok_or_else(|| Error::Numeric {
        op: "fit_params",
        msg: "no start produced a positive predicted loss".into(),
    })?;
    Ok(FitReport {
        law: FittedLaw {
            k2_sq: theta[0].exp(),
            k1_sq_damped_lambda: theta[1].exp(),
            noise_term: theta[2].exp(),
            alpha_z: theta[3],
        },
        rms_log_residual: (c / obs.len() as f64).sqrt(),
        n_observations: obs.len(),
        n_starts,
    })
}

fn log_uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    r.uniform_in(lo.ln(), hi.ln()).exp()
}

/// Synthetic observations of `law`: `N` in `[1e2, 1e5]`, `D` in `[1e3, 1e6]`
/// and horizon in `[2, 64]`, all log-uniform, `d ∈ {4, 8, 12, 16}`, with
/// losses scaled by `1 + noise·z`, `z ~ N(0, 1)`.
pub fn planted_observations(law: &FittedLaw, n: usize, noise: f64, seed: u64) -> Vec<Observation> {
    let mut r = Rng::derive(seed, "scaling/planted");
    (0..n)
        .map(|_| {
            let mut o = Observation {
                n_params: log_uniform(&mut r, 1e2, 1e5),
                n_data: log_uniform(&mut r, 1e3, 1e6),
                horizon: log_uniform(&mut r, 2.0, 64.0),
                d: [4.0, 8.0, 12.0, 16.0][r.below(4)],
                loss: 0.0,
            };
            o.loss = law.predict(&o) * (1.0 + noise * r.normal(0.0, 1.0));
            o
        })
        .collect()
}

/// Reads observations from a CSV with columns `n_params, n_data, horizon, d, loss`.
pub fn load_observations_csv(path: &Path) -> Result<Vec<Observation>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                row: i + 2,
                column: String::new(),
                msg: e.to_string(),
            })
        })
        .collect()
}
