//! Seeded synthetic series families.
//!
//! Default ranges keep the families apart in spectrum: `sinusoid_mix` has
//! periods 8–40, `regime_switch` carries a slow 48–96 seasonal term on top
//! of piecewise-constant levels, `trend_ar` is a linear trend plus a
//! stationary AR(1) process and `random_walk` is an integrated noise process.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::dataset::SeriesDataset;
use super::window::WindowSample;
use crate::error::{Error, Result};
use crate::numeric::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    SinusoidMix,
    TrendAr,
    RandomWalk,
    RegimeSwitch,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::SinusoidMix => "sinusoid_mix",
            FamilyKind::TrendAr => "trend_ar",
            FamilyKind::RandomWalk => "random_walk",
            FamilyKind::RegimeSwitch => "regime_switch",
        }
    }
}

/// Optional overrides of a family's parameter ranges. Each range is
/// `[lo, hi]`, sampled uniformly once per series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyRanges {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_coef: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_std: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFamily {
    pub kind: FamilyKind,
    /// Standard deviation of additive observation noise.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default, flatten)]
    pub ranges: FamilyRanges,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinusoid {
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn at(&self, t: usize) -> f64 {
        self.amplitude * (TAU * t as f64 / self.period + self.phase).sin()
    }
}

/// A generated series together with the periodic terms it contains.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub values: Vec<f64>,
    pub sinusoids: Vec<Sinusoid>,
}

fn draw(rng: &mut Rng, r: [f64; 2]) -> f64 {
    rng.uniform_in(r[0], r[1])
}

fn draw_int(rng: &mut Rng, r: [usize; 2]) -> usize {
    r[0] + rng.below(r[1] - r[0] + 1)
}

impl SynthFamily {
    pub fn new(kind: FamilyKind, noise_std: f64) -> Self {
        SynthFamily {
            kind,
            noise_std,
            ranges: FamilyRanges::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ranges;
        let bad_f = [r.period, r.amplitude, r.phase, r.slope, r.ar_coef, r.step_std, r.drift, r.level]
            .iter()
            .flatten()
            .any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo <= hi));
        let bad_i = [r.components, r.dwell].iter().flatten().any(|[lo, hi]| lo > hi || *lo == 0);
        let bad_period = r.period.is_some_and(|[lo, _]| lo <= 0.0);
        if bad_f || bad_i || bad_period || !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("invalid ranges for family {}", self.name())));
        }
        Ok(())
    }

    pub fn sample(&self, len: usize, rng: &mut Rng) -> SynthSample {
        let r = &self.ranges;
        let mut sinusoids = Vec::new();
        let mut values = match self.kind {
            FamilyKind::SinusoidMix => {
                let k = draw_int(rng, r.components.unwrap_or([1, 3]));
                for _ in 0..k {
                    sinusoids.push(Sinusoid {
                        period: draw(rng, r.period.unwrap_or([8.0, 40.0])),
                        amplitude: draw(rng, r.amplitude.unwrap_or([0.5, 2.0])),
                        phase: draw(rng, r.phase.unwrap_or([0.0, TAU])),
                    });
                }
                (0..len).map(|t| sinusoids.iter().map(|s| s.at(t)).sum()).collect()
            }
            FamilyKind::TrendAr => {
                let slope = draw(rng, r.slope.unwrap_or([-0.02, 0.02]));
                let phi = draw(rng, r.ar_coef.unwrap_or([0.6, 0.95]));
                let sd = draw(rng, r.step_std.unwrap_or([0.2, 0.5]));
                let mut a = rng.normal(0.0, sd / (1.0 - phi * phi).sqrt());
                (0..len)
                    .map(|t| {
                        let v = slope * t as f64 + a;
                        a = phi * a + rng.normal(0.0, sd);
                        v
                    })
                    .collect()
            }
            FamilyKind::RandomWalk => {
                let drift = draw(rng, r.drift.unwrap_or([-0.05, 0.05]));
                let sd = draw(rng, r.step_std.unwrap_or([0.5, 1.5]));
                let mut x = 0.0;
                (0..len)
                    .map(|_| {
                        let v = x;
                        x += drift + rng.normal(0.0, sd);
                        v
                    })
                    .collect()
            }
            FamilyKind::RegimeSwitch => {
                let dwell = r.dwell.unwrap_or([32, 128]);
                let level = r.level.unwrap_or([-3.0, 3.0]);
                let s = Sinusoid {
                    period: draw(rng, r.period.unwrap_or([48.0, 96.0])),
                    amplitude: draw(rng, r.amplitude.unwrap_or([0.3, 1.0])),
                    phase: draw(rng, r.phase.unwrap_or([0.0, TAU])),
                };
                sinusoids.push(s);
                let mut out = Vec::with_capacity(len);
                while out.len() < len {
                    let lv = draw(rng, level);
                    let n = draw_int(rng, dwell).min(len - out.len());
                    for _ in 0..n {
                        let t = out.len();
                        out.push(lv + s.at(t));
                    }
                }
                out
            }
        };
        if self.noise_std > 0.0 {
            for v in &mut values {
                *v += rng.normal(0.0, self.noise_std);
            }
        }
        SynthSample { values, sinusoids }
    }
}

fn series_rng(seed: u64, family: usize, index: usize) -> Rng {
    Rng::derive(seed, &format!("synth/{family}/{index}"))
}

/// `n_per_family` series of `length` points for each family, interleaved
/// round-robin (series `j` comes from family `j % k`). Series `j` depends only
/// on `(seed, j % k, j / k)`, so smaller corpora are prefixes of larger ones.
pub fn synth_corpus(families: &[SynthFamily], n_per_family: usize, length: usize, seed: u64) -> Result<SeriesDataset> {
    for f in families {
        f.validate()?;
    }
    let k = families.len();
    let mut series = Vec::with_capacity(n_per_family * k);
    for i in 0..n_per_family {
        for (fi, f) in families.iter().enumerate() {
            series.push(f.sample(length, &mut series_rng(seed, fi, i)).values);
        }
    }
    let name = families.iter().map(|f| f.name()).collect::<Vec<_>>().join("+");
    Ok(SeriesDataset::new(name, series))
}

/// Exactly `n_windows` single-window series of `L + H` points, drawn
/// round-robin from `families`; a prefix of any larger request.
pub fn corpus_windows(
    families: &[SynthFamily],
    n_windows: usize,
    lookback: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<WindowSample>> {
    if families.is_empty() {
        return Err(Error::Config("corpus needs at least one family".into()));
    }
    let per = n_windows.div_ceil(families.len());
    let ds = synth_corpus(families, per, lookback + horizon, seed)?;
    Ok(ds
        .series
        .into_iter()
        .take(n_windows)
        .enumerate()
        .map(|(i, mut s)| {
            let y = s.split_off(lookback);
            WindowSample::new(s, y, i, 0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<SynthFamily> {
        [FamilyKind::SinusoidMix, FamilyKind::TrendAr, FamilyKind::RandomWalk, FamilyKind::RegimeSwitch]
            .into_iter()
            .map(|k| SynthFamily::new(k, 0.1))
            .collect()
    }

    #[test]
    fn deterministic_and_counted() {
        let a = synth_corpus(&all(), 3, 200, 7).unwrap();
        let b = synth_corpus(&all(), 3, 200, 7).unwrap();
        assert_eq!(a.series[0], b.series[0]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert!(a.series.iter().all(|s| s.len() == 200 && s.iter().all(|v| v.is_finite())));
        assert_ne!(a.series[0], synth_corpus(&all(), 3, 200, 8).unwrap().series[0]);
    }

    #[test]
    fn zero_request_is_empty() {
        assert!(synth_corpus(&all(), 0, 100, 1).unwrap().is_empty());
        assert!(corpus_windows(&all(), 0, 16, 4, 1).unwrap().is_empty());
    }

    #[test]
    fn noiseless_sinusoids_match_closed_form() {
        let f = SynthFamily::new(FamilyKind::SinusoidMix, 0.0);
        let s = f.sample(300, &mut Rng::new(3));
        assert!(!s.sinusoids.is_empty());
        for (t, v) in s.values.iter().enumerate() {
            let expect: f64 = s.sinusoids.iter().map(|c| c.amplitude * (TAU * t as f64 / c.period + c.phase).sin()).sum();
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn smaller_corpus_is_prefix() {
        let small = corpus_windows(&all(), 10, 16, 4, 5).unwrap();
        let big = corpus_windows(&all(), 33, 16, 4, 5).unwrap();
        assert_eq!(big.len(), 33);
        assert_eq!(&big[..10], &small[..]);
    }

    #[test]
    fn family_json_round_trip() {
        let json = r#"{"kind":"sinusoid_mix","noise_std":0.05,"period":[10.0,20.0]}"#;
        let f: SynthFamily = serde_json::from_str(json).unwrap();
        assert_eq!(f.ranges.period, Some([10.0, 20.0]));
        let back: SynthFamily = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
