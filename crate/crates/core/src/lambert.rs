//! Principal branch of the Lambert W function on [−1/e, 0].

use std::f64::consts::E;

use crate::{Error, Result};

const BRANCH: f64 = -1.0 / E;

/// W₀(x) for −1/e ≤ x ≤ 0, by Halley iteration from a series seed.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !(BRANCH - 1e-15..=0.0).contains(&x) {
        return Err(Error::Domain(format!("lambert_w0 needs x in [-1/e, 0], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let gap = (E * x + 1.0).max(0.0);
    if gap < 1e-3 {
        return Ok(w_near_branch(gap));
    }
    let mut w = if gap < 0.3 {
        w_near_branch(gap)
    } else {
        // x − x² + 3x³/2 for small |x|, log-ish seed otherwise
        x * (1.0 - x + 1.5 * x * x)
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// W₀ from the gap g = 1 + e·x ≥ 0, using the branch-point expansion in
/// p = √(2g). Exact at the branch point, which avoids the √ loss of
/// accuracy when x is computed as a product close to −1/e.
pub fn w_near_branch(gap: f64) -> f64 {
    let p = (2.0 * gap).sqrt();
    const C: [f64; 8] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
        680_863.0 / 43_545_600.0,
    ];
    C.iter().rev().fold(0.0, |acc, c| acc * p + c)
}

/// W₀ evaluated from the gap 1 + e·x directly; refines with Halley away
/// from the branch point.
pub fn lambert_w0_from_gap(gap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gap) {
        return Err(Error::Domain(format!("gap 1 + e·x must lie in [0, 1], got {gap}")));
    }
    if gap < 1e-3 {
        Ok(w_near_branch(gap))
    } else {
        lambert_w0((gap - 1.0) / E)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(BRANCH).unwrap() + 1.0).abs() < 1e-7);
        assert_eq!(lambert_w0_from_gap(0.0).unwrap(), -1.0);
        assert!((lambert_w0(-0.2).unwrap() + 0.259_171_101_819_073_7).abs() < 1e-12);
        assert!(lambert_w0(0.1).is_err());
        assert!(lambert_w0(-0.5).is_err());
    }

    #[test]
    fn residual_is_small_everywhere() {
        for i in 0..=1000 {
            let x = BRANCH * i as f64 / 1000.0;
            let w = lambert_w0(x).unwrap();
            assert!((w * w.exp() - x).abs() <= 1e-12, "x = {x}");
            assert!((-1.0..=0.0).contains(&w));
        }
    }

    #[test]
    fn series_and_halley_agree_at_switch() {
        let g = 1e-3;
        let a = w_near_branch(g);
        let x = (g - 1.0) / E;
        assert!((a * a.exp() - x).abs() < 1e-14);
    }
}
