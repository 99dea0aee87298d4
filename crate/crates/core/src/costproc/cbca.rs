use serde::{Deserialize, Serialize};

use super::{CostVolume, Reference};
use crate::error::{Error, Result};
use crate::maps::Image;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbcaParams {
    /// Color threshold on the max-channel absolute difference.
    pub tau: f64,
    /// Arms stay strictly shorter than this.
    pub l_max: usize,
}

impl Default for CbcaParams {
    fn default() -> Self {
        CbcaParams { tau: 0.02, l_max: 5 }
    }
}

const LEFT: usize = 0;
const RIGHT: usize = 1;
const UP: usize = 2;
const DOWN: usize = 3;

/// Per-pixel cross arms `[left, right, up, down]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSupport {
    pub height: usize,
    pub width: usize,
    pub arms: Vec<[usize; 4]>,
}

impl CrossSupport {
    pub fn compute(image: &Image, params: &CbcaParams) -> Self {
        let (h, w) = (image.height, image.width);
        let limit = params.l_max.saturating_sub(1);
        let arm = |y: usize, x: usize, dy: isize, dx: isize| -> usize {
            let mut k = 0;
            while k < limit {
                let ny = y as isize + dy * (k as isize + 1);
                let nx = x as isize + dx * (k as isize + 1);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    break;
                }
                if image.color_distance(y, x, image, ny as usize, nx as usize) >= params.tau {
                    break;
                }
                k += 1;
            }
            k
        };
        let rows = par::map_range(h, |y| {
            (0..w)
                .map(|x| [arm(y, x, 0, -1), arm(y, x, 0, 1), arm(y, x, -1, 0), arm(y, x, 1, 0)])
                .collect::<Vec<_>>()
        });
        CrossSupport {
            height: h,
            width: w,
            arms: rows.concat(),
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> [usize; 4] {
        self.arms[y * self.width + x]
    }
}

/// Arms of the reference cross at `(y, x)` intersected with the partner
/// cross at disparity `d`; the reference arms alone when the partner falls
/// outside the image.
#[inline]
fn combined(rf: &CrossSupport, other: &CrossSupport, reference: Reference, y: usize, x: usize, d: usize) -> [usize; 4] {
    let a = rf.at(y, x);
    match reference.partner_x(x, d, rf.width) {
        Some(px) => {
            let b = other.at(y, px);
            [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2]), a[3].min(b[3])]
        }
        None => a,
    }
}

/// One aggregation pass: horizontal sums along each pixel's combined
/// horizontal arm, then a vertical sum of those along the combined vertical
/// arm. Invalid entries neither contribute nor change.
fn aggregate_once(vol: &CostVolume, rf: &CrossSupport, other: &CrossSupport) -> CostVolume {
    let (h, w, dm) = (vol.height, vol.width, vol.d_max);
    let mut hsum = vec![0.0; h * w * dm];
    let mut hcnt = vec![0u32; h * w * dm];
    {
        let rows: Vec<(Vec<f64>, Vec<u32>)> = par::map_range(h, |y| {
            let mut s = vec![0.0; w * dm];
            let mut c = vec![0u32; w * dm];
            for x in 0..w {
                for d in 0..dm {
                    let a = combined(rf, other, vol.reference, y, x, d);
                    for xx in x - a[LEFT]..=x + a[RIGHT] {
                        let i = vol.index(y, xx, d);
                        if vol.valid[i] {
                            s[x * dm + d] += vol.costs[i];
                            c[x * dm + d] += 1;
                        }
                    }
                }
            }
            (s, c)
        });
        for (y, (s, c)) in rows.into_iter().enumerate() {
            hsum[y * w * dm..(y + 1) * w * dm].copy_from_slice(&s);
            hcnt[y * w * dm..(y + 1) * w * dm].copy_from_slice(&c);
        }
    }
    let mut out = vol.clone();
    par::for_each_chunk_mut(&mut out.costs, w * dm, |y, row| {
        for x in 0..w {
            for d in 0..dm {
                if !vol.valid[vol.index(y, x, d)] {
                    continue;
                }
                let a = combined(rf, other, vol.reference, y, x, d);
                let (mut s, mut c) = (0.0, 0u32);
                for yy in y - a[UP]..=y + a[DOWN] {
                    let i = (yy * w + x) * dm + d;
                    s += hsum[i];
                    c += hcnt[i];
                }
                row[x * dm + d] = s / c as f64;
            }
        }
    });
    out
}

/// Cross-based cost aggregation, repeated `iterations` times.
pub fn cbca(
    volume: &CostVolume,
    left: &Image,
    right: &Image,
    params: &CbcaParams,
    iterations: i64,
) -> Result<CostVolume> {
    if iterations < 0 {
        return Err(Error::Config(format!("negative CBCA iteration count {iterations}")));
    }
    if params.tau <= 0.0 || params.l_max == 0 {
        return Err(Error::Config("CBCA needs tau > 0 and l_max ≥ 1".into()));
    }
    if !left.same_extent(right) || (left.height, left.width) != (volume.height, volume.width) {
        return Err(Error::Input("cost volume and images differ in extent".into()));
    }
    let cl = CrossSupport::compute(left, params);
    let cr = CrossSupport::compute(right, params);
    let (rf, other) = match volume.reference {
        Reference::Left => (&cl, &cr),
        Reference::Right => (&cr, &cl),
    };
    let mut v = volume.clone();
    for _ in 0..iterations {
        v = aggregate_once(&v, rf, other);
    }
    Ok(v)
}
