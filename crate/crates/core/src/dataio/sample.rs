use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::SyntheticScene;
use crate::costproc::CostVolume;
use crate::error::{Error, Result};
use crate::gdn::{extract_patch, DisparityPatch};
use crate::maps::{DisparityMap, Image};
use crate::matchnet::PatchPairSample;
use crate::nncore::Tensor;

/// `rf × rf` patch of every channel centered on `(y, x)`; the caller
/// guarantees it lies inside the image.
fn patch(img: &Image, y: usize, x: usize, rf: usize) -> Tensor {
    let r = rf / 2;
    let mut data = Vec::with_capacity(img.channels * rf * rf);
    for c in 0..img.channels {
        for yy in y - r..=y + r {
            for xx in x - r..=x + r {
                data.push(img.at(c, yy, xx));
            }
        }
    }
    Tensor::new(vec![img.channels, rf, rf], data).expect("sized above")
}

/// Draw `n` patch triples from a scene: positive at the rounded ground
/// truth, negative displaced by `±[neg_low, neg_high]` pixels. Centers are
/// non-occluded pixels whose three patches all fit inside the image.
/// Patches come from the standardized images, as at inference time.
pub fn sample_match_pairs(
    scene: &SyntheticScene,
    n: usize,
    rf: usize,
    neg_range: (f64, f64),
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PatchPairSample>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = neg_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Config(format!("bad negative offset range [{lo}, {hi}]")));
    }
    let left = scene.left.standardized();
    let right = scene.right.standardized();
    let (h, w) = (left.height, left.width);
    let r = rf / 2;
    if h < rf || w < rf {
        return Err(Error::Input("scene smaller than the patch".into()));
    }
    let fits = |x: isize| x >= r as isize && x + (r as isize) < w as isize;
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 200 * n + 10_000 {
            return Err(Error::Input("too few pixels admit a full patch triple".into()));
        }
        let y = rng.gen_range(r..h - r);
        let x = rng.gen_range(r..w - r);
        let i = y * w + x;
        if !scene.gt.valid[i] || scene.occluded[i] {
            continue;
        }
        let xp = (x as f64 - scene.gt.data[i]).round() as isize;
        let off = rng.gen_range(lo..=hi).round() as isize;
        let xn = if rng.gen_bool(0.5) { xp + off } else { xp - off };
        if !fits(xp) || !fits(xn) {
            continue;
        }
        out.push(PatchPairSample {
            left: patch(&left, y, x, rf),
            positive: patch(&right, y, xp as usize, rf),
            negative: patch(&right, y, xn as usize, rf),
        });
    }
    Ok(out)
}

/// Distinct pixel indices with usable ground truth, at most `n`.
pub(crate) fn gdn_centers(gt: &DisparityMap, d_max: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let limit = d_max as f64 - 1.0;
    let candidates: Vec<usize> = (0..gt.data.len())
        .filter(|&i| gt.valid[i] && (0.0..=limit).contains(&gt.data[i]))
        .collect();
    let k = n.min(candidates.len());
    index::sample(rng, candidates.len(), k)
        .into_iter()
        .map(|j| candidates[j])
        .collect()
}

/// Up to `n` distinct centers with valid ground truth inside `[0, D − 1]`,
/// each cut as a `[D, 9, 9]` window of the normalized volume.
pub fn sample_gdn_patches(
    volume: &CostVolume,
    gt: &DisparityMap,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DisparityPatch>> {
    if (gt.height, gt.width) != (volume.height, volume.width) {
        return Err(Error::Input("volume and ground truth differ in size".into()));
    }
    let picks = gdn_centers(gt, volume.d_max, n, rng);
    Ok(picks
        .into_iter()
        .map(|i| DisparityPatch {
            costs: extract_patch(volume, i / gt.width, i % gt.width),
            gt: gt.data[i],
        })
        .collect())
}
