//! Cost-volume post-processing: cross-based aggregation, semi-global
//! matching and tanh range normalization.

mod cbca;
mod sgm;
mod volume;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cbca::{cbca, CbcaParams, CrossSupport};
pub use sgm::{sgm, SgmParams, DIRECTIONS};
pub use volume::{CostVolume, Reference};

use crate::error::Result;
use crate::maps::Image;
use crate::matchnet::Mode;

/// Elementwise `tanh` of the costs; validity is kept.
pub fn normalize_tanh(volume: &CostVolume) -> CostVolume {
    let mut v = volume.clone();
    v.costs.iter_mut().for_each(|c| *c = c.tanh());
    v
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub cbca: CbcaParams,
    pub sgm: SgmParams,
}

/// What a post-processing run did and how long each stage took.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PostprocessStats {
    pub cbca_iterations: usize,
    pub sgm_runs: usize,
    pub cbca_time: Duration,
    pub sgm_time: Duration,
}

#[derive(Clone, Debug)]
pub struct Postprocessed {
    /// The aggregated volume before range normalization.
    pub raw: CostVolume,
    /// `tanh` of `raw`, the input to the disparity network.
    pub volume: CostVolume,
    pub stats: PostprocessStats,
}

/// Accurate: CBCA×2, SGM, CBCA×2, tanh. Fast: SGM, tanh.
pub fn postprocess(
    volume: &CostVolume,
    left: &Image,
    right: &Image,
    mode: Mode,
    cfg: &PostprocessConfig,
) -> Result<Postprocessed> {
    let mut stats = PostprocessStats::default();
    let mut v = volume.clone();
    let run_cbca = |v: &CostVolume, stats: &mut PostprocessStats| -> Result<CostVolume> {
        let t = Instant::now();
        let out = cbca(v, left, right, &cfg.cbca, 2)?;
        stats.cbca_iterations += 2;
        stats.cbca_time += t.elapsed();
        Ok(out)
    };
    if mode == Mode::Accurate {
        v = run_cbca(&v, &mut stats)?;
    }
    let t = Instant::now();
    v = sgm(&v, &cfg.sgm)?;
    stats.sgm_runs += 1;
    stats.sgm_time += t.elapsed();
    if mode == Mode::Accurate {
        v = run_cbca(&v, &mut stats)?;
    }
    Ok(Postprocessed {
        volume: normalize_tanh(&v),
        raw: v,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_values() {
        let v = CostVolume::from_fn(1, 3, 1, |_, x, _| [0.0, 50.0, -0.5][x]);
        let t = normalize_tanh(&v);
        assert_eq!(t.at(0, 0, 0), 0.0);
        assert!((t.at(0, 1, 0) - 1.0).abs() < 1e-12);
        assert!((t.at(0, 2, 0) + 0.4621).abs() < 1e-4);
    }

    #[test]
    fn schedules_per_mode() {
        let img = Image::zeros(1, 6, 8);
        let v = CostVolume::from_fn(6, 8, 3, |y, x, d| ((y + 2 * x + d) % 5) as f64 - 2.0);
        let cfg = PostprocessConfig::default();
        let f = postprocess(&v, &img, &img, Mode::Fast, &cfg).unwrap();
        let a = postprocess(&v, &img, &img, Mode::Accurate, &cfg).unwrap();
        assert_eq!((f.stats.cbca_iterations, f.stats.sgm_runs), (0, 1));
        assert_eq!((a.stats.cbca_iterations, a.stats.sgm_runs), (4, 1));
        assert_eq!(f.stats.cbca_time, Duration::ZERO);
        for c in f.volume.costs.iter().chain(&a.volume.costs) {
            assert!((-1.0..=1.0).contains(c));
        }
        assert_eq!(normalize_tanh(&a.raw).costs, a.volume.costs);
    }
}
