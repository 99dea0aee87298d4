use crate::error::{Error, Result};
use crate::maps::{ConfidenceMap, DisparityMap, Extent};

/// Accuracy-vs-density points `(t, accuracy)` obtained by keeping pixels in
/// descending confidence order. Pixels with equal confidence enter together,
/// so one point is emitted per distinct confidence value.
pub fn sparsification_curve(
    confidence: &ConfidenceMap,
    disparity: &DisparityMap,
    gt: &DisparityMap,
    err_threshold: f64,
) -> Result<Vec<(f64, f64)>> {
    if confidence.extent() != disparity.extent() || disparity.extent() != gt.extent() {
        return Err(Error::Input(
            "confidence, disparity and ground truth differ in size".into(),
        ));
    }
    let mut px: Vec<(f64, bool)> = (0..gt.data.len())
        .filter(|&i| gt.valid[i])
        .map(|i| {
            let ok = disparity.valid[i] && (disparity.data[i] - gt.data[i]).abs() <= err_threshold;
            (confidence.data[i], ok)
        })
        .collect();
    if px.is_empty() {
        return Err(Error::Input("no valid ground-truth pixels".into()));
    }
    if px.iter().any(|(c, _)| c.is_nan()) {
        return Err(Error::Numeric("NaN confidence".into()));
    }
    px.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = px.len() as f64;
    let mut points = Vec::new();
    let (mut kept, mut correct) = (0usize, 0usize);
    let mut i = 0;
    while i < px.len() {
        let c = px[i].0;
        while i < px.len() && px[i].0 == c {
            kept += 1;
            correct += px[i].1 as usize;
            i += 1;
        }
        points.push((kept as f64 / n, correct as f64 / kept as f64));
    }
    Ok(points)
}

/// Trapezoidal area under the sparsification curve over `t ∈ [0, 1]`; the
/// curve is held flat between `t = 0` and its first point.
pub fn auc_sparsification(
    confidence: &ConfidenceMap,
    disparity: &DisparityMap,
    gt: &DisparityMap,
    err_threshold: f64,
) -> Result<f64> {
    let pts = sparsification_curve(confidence, disparity, gt, err_threshold)?;
    let mut area = pts[0].0 * pts[0].1;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    Ok(area)
}
