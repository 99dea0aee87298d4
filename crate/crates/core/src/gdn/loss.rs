use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// Target weight of disparity bin `i` for ground truth `y_gt`.
#[inline]
pub fn smooth_weight(i: usize, y_gt: f64) -> f64 {
    let dist = (i as f64 - y_gt).abs();
    if dist <= 1.0 {
        0.65
    } else if dist <= 2.0 {
        0.25
    } else if dist <= 3.0 {
        0.1
    } else {
        0.0
    }
}

/// Unnormalized smooth target over `d` disparity bins.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothTarget {
    pub weights: Vec<f64>,
}

impl SmoothTarget {
    pub fn new(d: usize, y_gt: f64) -> Result<Self> {
        if !(0.0..=(d as f64 - 1.0)).contains(&y_gt) {
            return Err(Error::Input(format!(
                "ground truth {y_gt} outside [0, {}]",
                d as f64 - 1.0
            )));
        }
        Ok(SmoothTarget {
            weights: (0..d).map(|i| smooth_weight(i, y_gt)).collect(),
        })
    }
}

fn log_softmax(y: &[f64]) -> Vec<f64> {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + y.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    y.iter().map(|v| v - lse).collect()
}

/// `−Σ p(i, y_gt) · log softmax(y)_i`.
pub fn weighted_xent_loss(scores: &[f64], y_gt: f64) -> Result<f64> {
    let t = SmoothTarget::new(scores.len(), y_gt)?;
    Ok(-log_softmax(scores)
        .iter()
        .zip(&t.weights)
        .map(|(l, p)| p * l)
        .sum::<f64>())
}

/// Index of the largest score, smallest index on ties.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

/// 1 when the current prediction is within one pixel of the ground truth.
pub fn reflective_label(scores: &[f64], y_gt: f64) -> u8 {
    ((argmax(scores) as f64 - y_gt).abs() < 1.0) as u8
}

/// Column-wise argmax of a `[D, N]` tensor.
pub(crate) fn argmax_columns(t: &Tensor) -> Vec<usize> {
    let d = t.shape()[0];
    let n = t.len() / d;
    let x = t.data();
    (0..n)
        .map(|j| {
            let mut best = 0;
            for i in 1..d {
                if x[i * n + j] > x[best * n + j] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
