use super::{MatchNet, Mode};
use crate::costproc::{CostVolume, Reference};
use crate::error::{Error, Result};
use crate::maps::Image;
use crate::nncore::Tensor;
use crate::par;

/// Per-pixel descriptors stored pixel-major (`(y·W + x)·F + f`).
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorMap {
    pub features: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl DescriptorMap {
    /// From a planar `[F, H, W]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 {
            return Err(Error::Input(format!("expected [F, H, W], got {s:?}")));
        }
        let (f, h, w) = (s[0], s[1], s[2]);
        let mut data = vec![0.0; f * h * w];
        let src = t.data();
        for c in 0..f {
            for p in 0..h * w {
                data[p * f + c] = src[c * h * w + p];
            }
        }
        Ok(DescriptorMap {
            features: f,
            height: h,
            width: w,
            data,
        })
    }

    pub fn compute(net: &MatchNet, image: &Image) -> Result<Self> {
        Self::from_tensor(&net.describe_image(image)?)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.features;
        &self.data[i..i + self.features]
    }
}

/// How many network passes a volume took. Fast mode counts each
/// disparity's dot-product sweep as one decision pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub description_passes: usize,
    pub decision_passes: usize,
}

/// Describe both images once and score every disparity.
pub fn build_cost_volume(
    net: &MatchNet,
    left: &Image,
    right: &Image,
    d_max: usize,
    reference: Reference,
) -> Result<(CostVolume, BuildStats)> {
    if !left.same_extent(right) || left.channels != right.channels {
        return Err(Error::Input(format!(
            "left {}x{}x{} and right {}x{}x{} differ",
            left.channels, left.height, left.width, right.channels, right.height, right.width
        )));
    }
    let dl = DescriptorMap::compute(net, left)?;
    let dr = DescriptorMap::compute(net, right)?;
    let (vol, mut stats) = cost_volume_from_descriptors(net, &dl, &dr, d_max, reference)?;
    stats.description_passes = 2;
    Ok((vol, stats))
}

/// Score precomputed descriptors. The same pair of maps serves both
/// references.
pub fn cost_volume_from_descriptors(
    net: &MatchNet,
    left: &DescriptorMap,
    right: &DescriptorMap,
    d_max: usize,
    reference: Reference,
) -> Result<(CostVolume, BuildStats)> {
    if d_max == 0 {
        return Err(Error::Config("d_max must be positive".into()));
    }
    if (left.height, left.width, left.features) != (right.height, right.width, right.features) {
        return Err(Error::Input("descriptor maps differ in shape".into()));
    }
    let (h, w, f) = (left.height, left.width, left.features);
    let mut vol = CostVolume::new(h, w, d_max, reference);
    // (reference descriptor, partner descriptor) for pixel x at disparity d
    let pair = |y: usize, x: usize, d: usize| -> Option<(&[f64], &[f64])> {
        let px = reference.partner_x(x, d, w)?;
        Some(match reference {
            Reference::Left => (left.at(y, x), right.at(y, px)),
            Reference::Right => (left.at(y, px), right.at(y, x)),
        })
    };
    let mut stats = BuildStats::default();
    match net.config.mode {
        Mode::Fast => {
            let valid = &vol.valid;
            par::for_each_chunk_mut(&mut vol.costs, w * d_max, |y, row| {
                for x in 0..w {
                    for d in 0..d_max {
                        if !valid[(y * w + x) * d_max + d] {
                            continue;
                        }
                        let (a, b) = pair(y, x, d).expect("valid entry has a partner");
                        row[x * d_max + d] = -a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
                    }
                }
            });
            stats.decision_passes = d_max;
        }
        Mode::Accurate => {
            // one batched decision pass per disparity
            let planes = par::try_map_range(d_max, |d| -> Result<Vec<(usize, f64)>> {
                let mut idx = Vec::new();
                let mut pairs = Vec::new();
                for y in 0..h {
                    for x in 0..w {
                        if let Some((a, b)) = pair(y, x, d) {
                            idx.push(y * w + x);
                            pairs.push((a, b));
                        }
                    }
                }
                if idx.is_empty() {
                    return Ok(Vec::new());
                }
                let n = idx.len();
                let mut data = vec![0.0; 2 * f * n];
                for (j, (a, b)) in pairs.iter().enumerate() {
                    for k in 0..f {
                        data[k * n + j] = a[k];
                        data[(f + k) * n + j] = b[k];
                    }
                }
                let v = net.decide(Tensor::new(vec![2 * f, n], data)?)?;
                Ok(idx.into_iter().zip(v).map(|(p, v)| (p, net.decision_cost(v))).collect())
            })?;
            for (d, plane) in planes.into_iter().enumerate() {
                for (p, c) in plane {
                    vol.costs[p * d_max + d] = c;
                }
            }
            stats.decision_passes = d_max;
        }
    }
    vol.fill_invalid_with_max();
    Ok((vol, stats))
}
