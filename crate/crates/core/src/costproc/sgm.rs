use serde::{Deserialize, Serialize};

use super::CostVolume;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgmParams {
    pub p1: f64,
    pub p2: f64,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams { p1: 1.0, p2: 8.0 }
    }
}

/// Path directions `(dy, dx)`: left-to-right, right-to-left, top-down, bottom-up.
pub const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];

/// Aggregated costs `L_r` along one direction.
fn path_costs(vol: &CostVolume, p: &SgmParams, (dy, dx): (isize, isize)) -> Vec<f64> {
    let (h, w, dm) = (vol.height, vol.width, vol.d_max);
    let mut l = vec![0.0; h * w * dm];
    let ys: Vec<usize> = if dy < 0 {
        (0..h).rev().collect()
    } else {
        (0..h).collect()
    };
    let xs: Vec<usize> = if dx < 0 {
        (0..w).rev().collect()
    } else {
        (0..w).collect()
    };
    let mut prev_l = vec![0.0; dm];
    for &y in &ys {
        for &x in &xs {
            let base = vol.index(y, x, 0);
            let py = y as isize - dy;
            let px = x as isize - dx;
            if py < 0 || px < 0 || py >= h as isize || px >= w as isize {
                l[base..base + dm].copy_from_slice(&vol.costs[base..base + dm]);
                continue;
            }
            let prev = vol.index(py as usize, px as usize, 0);
            prev_l.copy_from_slice(&l[prev..prev + dm]);
            let cur = &mut l[base..base + dm];
            let m = prev_l.iter().copied().fold(f64::INFINITY, f64::min);
            for d in 0..dm {
                let mut best = prev_l[d];
                if d > 0 {
                    best = best.min(prev_l[d - 1] + p.p1);
                }
                if d + 1 < dm {
                    best = best.min(prev_l[d + 1] + p.p1);
                }
                best = best.min(m + p.p2);
                cur[d] = vol.costs[base + d] + best - m;
            }
        }
    }
    l
}

/// Semi-global matching over four directions, averaged over directions.
pub fn sgm(volume: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    if params.p2 < params.p1 {
        return Err(Error::Config(format!(
            "SGM penalty P2 = {} is below P1 = {}",
            params.p2, params.p1
        )));
    }
    if params.p1 < 0.0 {
        return Err(Error::Config("SGM penalties must be non-negative".into()));
    }
    if volume.costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("non-finite cost entering SGM".into()));
    }
    let paths = par::map_range(DIRECTIONS.len(), |i| path_costs(volume, params, DIRECTIONS[i]));
    let mut out = volume.clone();
    let n = DIRECTIONS.len() as f64;
    for (i, c) in out.costs.iter_mut().enumerate() {
        *c = paths.iter().map(|p| p[i]).sum::<f64>() / n;
    }
    Ok(out)
}
