use crate::error::{Error, Result};

/// Guard added to the PKRN and LRD denominators.
pub const EPS: f64 = 1e-9;

/// Minimum of a cost curve and the runner-up used by ratio measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveMinima {
    pub d1: usize,
    pub c1: f64,
    /// Second smallest local minimum (other than `d1`); the second smallest
    /// value overall when the curve has no other local minimum.
    pub c2: f64,
}

fn check(curve: &[f64]) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::Input("empty cost curve".into()));
    }
    Ok(())
}

pub fn curve_minima(curve: &[f64]) -> Result<CurveMinima> {
    check(curve)?;
    let n = curve.len();
    let mut d1 = 0;
    for (d, c) in curve.iter().enumerate() {
        if *c < curve[d1] {
            d1 = d;
        }
    }
    let c1 = curve[d1];
    let is_local_min = |d: usize| (d == 0 || curve[d] <= curve[d - 1]) && (d + 1 == n || curve[d] <= curve[d + 1]);
    let mut c2 = f64::INFINITY;
    for d in (0..n).filter(|&d| d != d1 && is_local_min(d)) {
        c2 = c2.min(curve[d]);
    }
    if c2.is_infinite() {
        c2 = (0..n)
            .filter(|&d| d != d1)
            .map(|d| curve[d])
            .fold(f64::INFINITY, f64::min);
    }
    if c2.is_infinite() {
        c2 = c1;
    }
    Ok(CurveMinima { d1, c1, c2 })
}

/// Matching score measure: `−c1`.
pub fn msm(curve: &[f64]) -> Result<f64> {
    Ok(-curve_minima(curve)?.c1)
}

/// Largest softmax probability of the disparity scores.
pub fn prob(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    1.0 / z
}

/// Curvature `−2c(d1) + c(d1−1) + c(d1+1)`; a missing neighbor at the end
/// of the range is replaced by the one that exists.
pub fn cur(curve: &[f64]) -> Result<f64> {
    let m = curve_minima(curve)?;
    let n = curve.len();
    if n == 1 {
        return Ok(0.0);
    }
    let lo = if m.d1 > 0 { curve[m.d1 - 1] } else { curve[m.d1 + 1] };
    let hi = if m.d1 + 1 < n { curve[m.d1 + 1] } else { curve[m.d1 - 1] };
    Ok(-2.0 * m.c1 + lo + hi)
}

/// Peak ratio `c2 / c1`, for non-negative costs.
pub fn pkrn(curve: &[f64]) -> Result<f64> {
    let m = curve_minima(curve)?;
    Ok(m.c2 / (m.c1 + EPS))
}

/// Negative entropy of the softmin distribution over the curve; lies in
/// `[−log D, 0]`.
pub fn nem(curve: &[f64]) -> Result<f64> {
    check(curve)?;
    if curve.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("non-finite cost".into()));
    }
    let m = curve.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = curve.iter().map(|c| (-(c - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.iter()
        .map(|wi| {
            let p = wi / z;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum())
}

/// Left-right difference `(c2 − c1) / |c1 − min c_R|`, where `right_curve`
/// is the right-reference curve at the pixel the left minimum points to.
pub fn lrd(left_curve: &[f64], right_curve: &[f64]) -> Result<f64> {
    let m = curve_minima(left_curve)?;
    check(right_curve)?;
    let r = right_curve.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((m.c2 - m.c1) / ((m.c1 - r).abs() + EPS))
}
