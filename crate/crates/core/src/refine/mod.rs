//! Confidence-gated left-right refinement: labeling, outlier
//! interpolation, subpixel enhancement and edge-preserving smoothing.

mod filters;
mod interp;
mod label;

use serde::{Deserialize, Serialize};

pub use filters::{bilateral_filter, median_filter, smooth};
pub use interp::{directions_16, interpolate, subpixel, subpixel_offset};
pub use label::{label_pixels, PixelLabel, PixelLabelMap};

use crate::costproc::CostVolume;
use crate::error::Result;
use crate::maps::{ConfidenceMap, DisparityMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    /// Left-right agreement tolerance.
    pub tau1: f64,
    /// Minimum left confidence for the override clause.
    pub tau2: f64,
    /// Required confidence margin over the right view.
    pub tau3: f64,
    /// Tolerance of the mismatch search.
    pub tau4: f64,
    pub median_window: usize,
    pub sigma_s: f64,
    pub sigma_r: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            tau1: 1.0,
            tau2: 0.7,
            tau3: 0.1,
            tau4: 1.0,
            median_window: 5,
            sigma_s: 5.0,
            sigma_r: 7.5,
        }
    }
}

/// Intermediate maps of a refinement run.
#[derive(Clone, Debug, PartialEq)]
pub struct Refined {
    pub labels: PixelLabelMap,
    pub interpolated: DisparityMap,
    pub subpixel: DisparityMap,
    pub disparity: DisparityMap,
}

/// Label, interpolate, apply subpixel enhancement on `volume` (left
/// reference) and smooth.
pub fn refine(
    d_left: &DisparityMap,
    d_right: &DisparityMap,
    c_left: &ConfidenceMap,
    c_right: &ConfidenceMap,
    volume: &CostVolume,
    cfg: &RefinementConfig,
) -> Result<Refined> {
    let labels = label_pixels(d_left, d_right, c_left, c_right, volume.d_max, cfg)?;
    let interpolated = interpolate(d_left, &labels)?;
    let sub = subpixel(&interpolated, volume)?;
    let disparity = smooth(&sub, cfg);
    Ok(Refined {
        labels,
        interpolated,
        subpixel: sub,
        disparity,
    })
}
