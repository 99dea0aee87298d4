use std::f64::consts::PI;

use super::{PixelLabel, PixelLabelMap};
use crate::costproc::CostVolume;
use crate::error::{Error, Result};
use crate::maps::{DisparityMap, Extent};
use crate::par;

/// Unit steps at multiples of 22.5°, as `(dx, dy)`.
pub fn directions_16() -> [(f64, f64); 16] {
    std::array::from_fn(|k| {
        let a = k as f64 * PI / 8.0;
        (a.cos(), a.sin())
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// First correct pixel along a rasterized ray from `(y, x)`.
fn ray(labels: &PixelLabelMap, d: &DisparityMap, y: usize, x: usize, (dx, dy): (f64, f64)) -> Option<f64> {
    let (h, w) = (labels.height as f64, labels.width as f64);
    let reach = (h * h + w * w).sqrt().ceil() as usize;
    let mut last = (y, x);
    for k in 1..=reach {
        let fx = (x as f64 + dx * k as f64).round();
        let fy = (y as f64 + dy * k as f64).round();
        if fx < 0.0 || fy < 0.0 || fx >= w || fy >= h {
            return None;
        }
        let p = (fy as usize, fx as usize);
        if p == last {
            continue;
        }
        last = p;
        if labels.at(p.0, p.1) == PixelLabel::Correct {
            return Some(d.at(p.0, p.1));
        }
    }
    None
}

fn scan_row(labels: &PixelLabelMap, d: &DisparityMap, y: usize, x: usize) -> Option<f64> {
    let left = (0..x).rev().find(|&xx| labels.at(y, xx) == PixelLabel::Correct);
    let right = || (x + 1..labels.width).find(|&xx| labels.at(y, xx) == PixelLabel::Correct);
    left.or_else(right).map(|xx| d.at(y, xx))
}

fn from_rays(labels: &PixelLabelMap, d: &DisparityMap, y: usize, x: usize) -> Option<f64> {
    let mut found: Vec<f64> = directions_16()
        .into_iter()
        .filter_map(|dir| ray(labels, d, y, x, dir))
        .collect();
    (!found.is_empty()).then(|| median(&mut found))
}

/// Fill mismatches with the median of the nearest correct pixels along 16
/// directions and occlusions with the nearest correct pixel to the left
/// (to the right when there is none). Correct pixels are kept as they are.
pub fn interpolate(d: &DisparityMap, labels: &PixelLabelMap) -> Result<DisparityMap> {
    if d.extent() != (labels.height, labels.width) {
        return Err(Error::Input("disparity and label maps differ in size".into()));
    }
    if !labels.labels.contains(&PixelLabel::Correct) {
        return Err(Error::Input("no pixel is labeled correct".into()));
    }
    let (h, w) = d.extent();
    let global = || {
        let mut all: Vec<f64> = (0..h * w)
            .filter(|&i| labels.labels[i] == PixelLabel::Correct)
            .map(|i| d.data[i])
            .collect();
        median(&mut all)
    };
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| match labels.at(y, x) {
                PixelLabel::Correct => d.at(y, x),
                PixelLabel::Mismatch => from_rays(labels, d, y, x)
                    .or_else(|| scan_row(labels, d, y, x))
                    .unwrap_or_else(global),
                PixelLabel::Occlusion => scan_row(labels, d, y, x)
                    .or_else(|| from_rays(labels, d, y, x))
                    .unwrap_or_else(global),
            })
            .collect::<Vec<_>>()
    });
    let mut out = d.clone();
    out.data = rows.concat();
    Ok(out)
}

/// Parabola-vertex correction for the costs around a disparity, or `None`
/// when the fit is not a proper minimum.
pub fn subpixel_offset(c_minus: f64, c0: f64, c_plus: f64) -> Option<f64> {
    let denom = 2.0 * (c_plus - 2.0 * c0 + c_minus);
    if denom <= 0.0 || c0 > c_minus || c0 > c_plus {
        return None;
    }
    Some(-(c_plus - c_minus) / denom)
}

/// Refine integral disparities that sit on a local cost minimum away from
/// the ends of the range; everything else passes through.
pub fn subpixel(d: &DisparityMap, volume: &CostVolume) -> Result<DisparityMap> {
    if d.extent() != (volume.height, volume.width) {
        return Err(Error::Input("disparity map and volume differ in size".into()));
    }
    let mut out = d.clone();
    for y in 0..d.height {
        for x in 0..d.width {
            let v = d.at(y, x);
            if !d.is_valid(y, x) || v.fract() != 0.0 || v < 1.0 || v + 1.0 >= volume.d_max as f64 {
                continue;
            }
            let k = v as usize;
            let ok = volume.valid_curve(y, x);
            if !(ok[k - 1] && ok[k] && ok[k + 1]) {
                continue;
            }
            let c = volume.curve(y, x);
            if let Some(off) = subpixel_offset(c[k - 1], c[k], c[k + 1]) {
                out.data[y * d.width + x] = v + off;
            }
        }
    }
    Ok(out)
}
