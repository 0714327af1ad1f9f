//! Look-back/horizon windows, instance normalization and chronological splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this standard deviation a window is treated as constant.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: f64,
    pub std: f64,
}

impl Norm {
    /// Mean and population standard deviation.
    pub fn of(x: &[f64]) -> Norm {
        if x.is_empty() {
            return Norm { mean: 0.0, std: 0.0 };
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Norm { mean, std: var.sqrt() }
    }

    pub fn is_degenerate(&self) -> bool {
        self.std < NORM_EPS
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![0.0; x.len()];
        }
        x.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        let s = if self.is_degenerate() { 1.0 } else { self.std };
        x.iter().map(|v| v * s + self.mean).collect()
    }
}

/// One `(look-back, horizon)` pair in raw units, with the look-back's statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub norm: Norm,
    /// Source series index and offset of `x[0]` within it.
    pub series: usize,
    pub start: usize,
}

impl WindowSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>, series: usize, start: usize) -> Self {
        let norm = Norm::of(&x);
        WindowSample {
            x,
            y,
            norm,
            series,
            start,
        }
    }

    pub fn x_norm(&self) -> Vec<f64> {
        self.norm.normalize(&self.x)
    }

    pub fn y_norm(&self) -> Vec<f64> {
        self.norm.normalize(&self.y)
    }

    /// Normalized look-back followed by normalized horizon.
    pub fn training_sequence(&self) -> Vec<f64> {
        let mut s = self.x_norm();
        s.extend(self.y_norm());
        s
    }
}

/// `floor((len − L − H) / stride) + 1` windows, or none when the series is
/// shorter than `L + H`.
pub fn make_windows(series: &[f64], lookback: usize, horizon: usize, stride: usize) -> Result<Vec<WindowSample>> {
    make_windows_from(series, 0, series.len(), 0, lookback, horizon, stride)
}

fn make_windows_from(
    series: &[f64],
    from: usize,
    to: usize,
    series_idx: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if stride == 0 {
        return Err(Error::Usage("window stride must be at least 1".into()));
    }
    if lookback == 0 || horizon == 0 {
        return Err(Error::Usage("look-back and horizon must be positive".into()));
    }
    let span = lookback + horizon;
    let mut out = Vec::new();
    let mut s = from;
    while s + span <= to {
        out.push(WindowSample::new(
            series[s..s + lookback].to_vec(),
            series[s + lookback..s + span].to_vec(),
            series_idx,
            s,
        ));
        s += stride;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

/// Contiguous index ranges of one series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segments {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be in [0,1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    pub fn segments(&self, len: usize) -> Segments {
        let train_end = (len as f64 * self.train).floor() as usize;
        let val_end = (train_end + (len as f64 * self.val).floor() as usize).min(len);
        Segments {
            train: (0, train_end),
            val: (train_end, val_end),
            test: (val_end, len),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SplitWindows {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl SplitWindows {
    pub fn extend(&mut self, other: SplitWindows) {
        self.train.extend(other.train);
        self.val.extend(other.val);
        self.test.extend(other.test);
    }
}

/// Train windows lie entirely in the train segment. Validation and test
/// windows have their horizon inside their segment; their look-back may
/// reach back into the preceding segment.
pub fn split_windows(
    series: &[f64],
    series_idx: usize,
    split: &SplitSpec,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<SplitWindows> {
    split.validate()?;
    let seg = split.segments(series.len());
    let w = |from: usize, to: usize| make_windows_from(series, from, to, series_idx, lookback, horizon, stride);
    Ok(SplitWindows {
        train: w(seg.train.0, seg.train.1)?,
        val: w(seg.val.0.saturating_sub(lookback), seg.val.1)?,
        test: w(seg.test.0.saturating_sub(lookback), seg.test.1)?,
    })
}

/// The last contiguous `ceil(fraction · n)` windows.
pub fn few_shot_subset(windows: &[WindowSample], fraction: f64) -> Result<Vec<WindowSample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Usage(format!("few-shot fraction must be in (0, 1], got {fraction}")));
    }
    let k = ((fraction * windows.len() as f64).ceil() as usize).min(windows.len());
    Ok(windows[windows.len() - k..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_count_formula() {
        let s: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(make_windows(&s, 112, 16, 1).unwrap().len(), 873);
        assert_eq!(make_windows(&s[..128], 112, 16, 1).unwrap().len(), 1);
        assert!(make_windows(&s[..100], 112, 16, 1).unwrap().is_empty());
        assert_eq!(make_windows(&s, 112, 16, 10).unwrap().len(), (1000 - 128) / 10 + 1);
    }

    #[test]
    fn constant_window_normalizes_to_zero() {
        let w = make_windows(&[5.0; 20], 8, 4, 1).unwrap();
        assert!(w[0].x_norm().iter().all(|&v| v == 0.0));
        assert_eq!(w[0].norm.denormalize(&[0.0])[0], 5.0);
    }

    #[test]
    fn normalized_window_is_standard() {
        let s: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin() * 4.0 + 2.0).collect();
        let w = &make_windows(&s, 32, 8, 1).unwrap()[0];
        let n = Norm::of(&w.x_norm());
        assert!(n.mean.abs() < 1e-12 && (n.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stride_span_tiles_series() {
        let s: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let mut rebuilt: Vec<f64> = Vec::new();
        for w in make_windows(&s, 8, 4, 12).unwrap() {
            rebuilt.extend(&w.x);
            rebuilt.extend(&w.y);
        }
        assert_eq!(rebuilt, s);
    }

    #[test]
    fn splits_are_chronological() {
        let s: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let seg = SplitSpec::default().segments(s.len());
        assert!(seg.train.1 <= seg.val.0 && seg.val.1 <= seg.test.0);
        let sw = split_windows(&s, 0, &SplitSpec::default(), 16, 8, 1).unwrap();
        let last_train = sw.train.iter().map(|w| w.start + 24).max().unwrap();
        let first_val_y = sw.val.iter().map(|w| w.start + 16).min().unwrap();
        let first_test_y = sw.test.iter().map(|w| w.start + 16).min().unwrap();
        assert!(last_train <= seg.train.1);
        assert_eq!(first_val_y, seg.val.0);
        assert_eq!(first_test_y, seg.test.0);
    }

    #[test]
    fn few_shot_rules() {
        let ws: Vec<WindowSample> = (0..1000).map(|i| WindowSample::new(vec![i as f64], vec![0.0], 0, i)).collect();
        let sub = few_shot_subset(&ws, 0.10).unwrap();
        assert_eq!(sub.len(), 100);
        assert_eq!(sub[0].start, 900);
        assert_eq!(sub[99].start, 999);
        assert_eq!(few_shot_subset(&ws, 1.0).unwrap().len(), 1000);
        assert_eq!(few_shot_subset(&ws[..9], 0.10).unwrap().len(), 1);
        assert!(few_shot_subset(&ws, 0.0).is_err());
        assert!(few_shot_subset(&ws, 1.5).is_err());
    }

    #[test]
    fn invalid_split_rejected() {
        let s = SplitSpec {
            train: 0.5,
            val: 0.5,
            test: 0.5,
        };
        assert!(s.validate().is_err());
    }
}
