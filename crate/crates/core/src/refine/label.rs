use super::RefinementConfig;
use crate::error::{Error, Result};
use crate::maps::{ConfidenceMap, DisparityMap, Extent};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PixelLabel {
    Correct,
    Mismatch,
    Occlusion,
}

impl PixelLabel {
    /// Gray level used when the label map is saved as an image.
    pub fn gray(self) -> u8 {
        match self {
            PixelLabel::Correct => 0,
            PixelLabel::Mismatch => 128,
            PixelLabel::Occlusion => 255,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelLabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<PixelLabel>,
}

impl PixelLabelMap {
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> PixelLabel {
        self.labels[y * self.width + x]
    }

    /// `(correct, mismatch, occlusion)` counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |l| self.labels.iter().filter(|v| **v == l).count();
        (
            c(PixelLabel::Correct),
            c(PixelLabel::Mismatch),
            c(PixelLabel::Occlusion),
        )
    }

    pub fn to_gray(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.gray()).collect()
    }
}

/// Right-view pixel `x − d`, if inside the image.
#[inline]
fn partner(x: usize, d: f64) -> Option<usize> {
    let px = x as f64 - d.round();
    (px >= 0.0).then_some(px as usize)
}

/// Label every left pixel, applying the rules in order: left-right
/// agreement or the confidence override makes it correct, otherwise a
/// consistent alternative disparity in `[0, d_max)` makes it a mismatch,
/// otherwise it is occluded.
pub fn label_pixels(
    d_left: &DisparityMap,
    d_right: &DisparityMap,
    c_left: &ConfidenceMap,
    c_right: &ConfidenceMap,
    d_max: usize,
    cfg: &RefinementConfig,
) -> Result<PixelLabelMap> {
    let e = d_left.extent();
    if d_right.extent() != e || c_left.extent() != e || c_right.extent() != e {
        return Err(Error::Input("labeling inputs differ in size".into()));
    }
    let (h, w) = e;
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                let d = d_left.at(y, x);
                if let Some(px) = partner(x, d).filter(|&px| px < w) {
                    let agree = (d - d_right.at(y, px)).abs() <= cfg.tau1;
                    let cl = c_left.at(y, x);
                    let over = cl >= cfg.tau2 && cl - c_right.at(y, px) >= cfg.tau3;
                    if agree || over {
                        return PixelLabel::Correct;
                    }
                }
                let mismatch = (0..d_max.min(x + 1)).any(|dh| {
                    let dh = dh as f64;
                    dh != d && (dh - d_right.at(y, x - dh as usize)).abs() <= cfg.tau4
                });
                if mismatch {
                    PixelLabel::Mismatch
                } else {
                    PixelLabel::Occlusion
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(PixelLabelMap {
        height: h,
        width: w,
        labels: rows.concat(),
    })
}
