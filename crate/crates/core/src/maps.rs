//! Planar images and per-pixel maps.

use crate::error::{Error, Result};

/// Planar `[C, H, W]` image with `f64` samples, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Input(format!(
                "image {channels}x{height}x{width} needs {} samples, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn same_extent(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Largest per-channel absolute difference between two pixels of two images.
    #[inline]
    pub fn color_distance(&self, y: usize, x: usize, other: &Image, oy: usize, ox: usize) -> f64 {
        (0..self.channels)
            .map(|c| (self.at(c, y, x) - other.at(c, oy, ox)).abs())
            .fold(0.0, f64::max)
    }

    /// Each plane shifted and scaled to zero mean and unit variance.
    pub fn standardized(&self) -> Image {
        let n = self.height * self.width;
        let mut out = self.clone();
        for c in 0..self.channels {
            let plane = &mut out.data[c * n..(c + 1) * n];
            let mean = plane.iter().sum::<f64>() / n as f64;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
            for v in plane.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        out
    }

    /// Zero-pad every side by `pad` pixels.
    pub fn padded(&self, pad: usize) -> Image {
        let (h, w) = (self.height + 2 * pad, self.width + 2 * pad);
        let mut out = Image::zeros(self.channels, h, w);
        for c in 0..self.channels {
            for y in 0..self.height {
                let src = &self.data[(c * self.height + y) * self.width..][..self.width];
                let dst = &mut out.data[(c * h + y + pad) * w + pad..][..self.width];
                dst.copy_from_slice(src);
            }
        }
        out
    }

    /// Mirror horizontally. Turns a right-reference problem into a left-reference one.
    pub fn flipped(&self) -> Image {
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                let row = &mut out.data[(c * self.height + y) * self.width..][..self.width];
                row.reverse();
            }
        }
        out
    }
}

/// Subpixel disparity field with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(height: usize, width: usize) -> Self {
        DisparityMap {
            height,
            width,
            data: vec![0.0; height * width],
            valid: vec![true; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Input(format!(
                "disparity map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(DisparityMap {
            height,
            width,
            data,
            valid: vec![true; height * width],
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        DisparityMap {
            height,
            width,
            data: vec![value; height * width],
            valid: vec![true; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn same_extent<T: Extent>(&self, other: &T) -> bool {
        (self.height, self.width) == other.extent()
    }

    /// Mirrored along x.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        mirror_rows(&mut out.data, self.width);
        mirror_rows(&mut out.valid, self.width);
        out
    }
}

/// Per-pixel reliability scores; higher means more reliable.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Input(format!(
                "confidence map {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(ConfidenceMap { height, width, data })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        mirror_rows(&mut out.data, self.width);
        out
    }
}

fn mirror_rows<T: Copy>(data: &mut [T], width: usize) {
    for row in data.chunks_mut(width.max(1)) {
        row.reverse();
    }
}

pub trait Extent {
    fn extent(&self) -> (usize, usize);
}

impl Extent for DisparityMap {
    fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl Extent for ConfidenceMap {
    fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl Extent for Image {
    fn extent(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Fraction of valid ground-truth pixels whose prediction is off by more
/// than `threshold` pixels (3 for the KITTI metric, 2 for Middlebury).
pub fn error_rate(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<f64> {
    let (bad, total) = error_counts(pred, gt, threshold)?;
    Ok(bad as f64 / total as f64)
}

/// `(bad, valid)` pixel counts behind [`error_rate`].
pub fn error_counts(pred: &DisparityMap, gt: &DisparityMap, threshold: f64) -> Result<(usize, usize)> {
    if !pred.same_extent(gt) {
        return Err(Error::Input("prediction and ground truth differ in size".into()));
    }
    let mut bad = 0;
    let mut total = 0;
    for i in 0..gt.data.len() {
        if !gt.valid[i] {
            continue;
        }
        total += 1;
        if !pred.valid[i] || (pred.data[i] - gt.data[i]).abs() > threshold {
            bad += 1;
        }
    }
    if total == 0 {
        return Err(Error::Input("ground truth has no valid pixels".into()));
    }
    Ok((bad, total))
}
