use std::f64::consts::E;

use crate::error::{Error, Result};

/// Principal branch `W₀` of the Lambert W function, `W(x)·e^{W(x)} = x`.
///
/// Halley iteration from: the branch-point series for `x < −0.25`, `x` for
/// `|x| ≤ 1`, `ln(1 + x)` for `1 < x < 3` and `ln x − ln ln x` beyond.
pub fn lambert_w(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch {
        return Err(Error::Domain(format!("Lambert W is undefined below -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.25 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() <= 1.0 {
        x
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Newton iteration, independent of the Halley scheme above.
    fn newton_w(x: f64, w0: f64) -> f64 {
        let mut w = w0;
        for _ in 0..200 {
            w -= (w * w.exp() - x) / (w.exp() * (w + 1.0));
        }
        w
    }

    #[test]
    fn fixed_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w(1.0).unwrap() - 0.5671432904097838).abs() < 1e-15);
        assert!((lambert_w(1.0).unwrap() - newton_w(1.0, 0.5)).abs() < 1e-13);
        assert!((lambert_w(4.0).unwrap() - newton_w(4.0, 1.0)).abs() < 1e-13);
        assert_eq!(lambert_w(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn domain() {
        assert!(matches!(lambert_w(-0.5), Err(Error::Domain(_))));
        assert!(lambert_w(f64::NAN).is_err());
    }

    #[test]
    fn residuals_on_grid() {
        for x in [-0.3, 0.0, 0.5, 1.0, 4.0, 100.0] {
            let w = lambert_w(x).unwrap();
            assert!((w * w.exp() - x).abs() < 1e-12, "x={x}");
        }
        let w = lambert_w(1e6).unwrap();
        assert!(((w * w.exp() - 1e6) / 1e6).abs() < 1e-12);
    }

    #[test]
    fn near_branch_point() {
        for x in [-0.3678, -0.36, -0.3, -0.1, -1e-8, 1e-8] {
            let w = lambert_w(x).unwrap();
            assert!(w >= -1.0);
            assert!((w * w.exp() - x).abs() < 1e-12, "x={x}");
        }
    }
}
