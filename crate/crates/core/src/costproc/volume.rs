use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::DisparityMap;

/// Which image the volume is indexed by.
///
/// For the left reference, pixel `(x, y)` at disparity `d` corresponds to
/// `(x − d, y)` in the right image; for the right reference it corresponds
/// to `(x + d, y)` in the left image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reference {
    Left,
    Right,
}

impl Reference {
    #[inline]
    pub fn partner_x(self, x: usize, d: usize, width: usize) -> Option<usize> {
        match self {
            Reference::Left => x.checked_sub(d),
            Reference::Right => {
                let p = x + d;
                (p < width).then_some(p)
            }
        }
    }

    pub fn other(self) -> Reference {
        match self {
            Reference::Left => Reference::Right,
            Reference::Right => Reference::Left,
        }
    }
}

/// `H × W × D` matching costs (lower is better), stored pixel-major so that
/// each pixel's cost curve is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    pub height: usize,
    pub width: usize,
    pub d_max: usize,
    pub reference: Reference,
    pub costs: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CostVolume {
    /// Zero costs; validity from the stereo geometry.
    pub fn new(height: usize, width: usize, d_max: usize, reference: Reference) -> Self {
        let mut valid = vec![true; height * width * d_max];
        for y in 0..height {
            for x in 0..width {
                for d in 0..d_max {
                    valid[(y * width + x) * d_max + d] = reference.partner_x(x, d, width).is_some();
                }
            }
        }
        CostVolume {
            height,
            width,
            d_max,
            reference,
            costs: vec![0.0; height * width * d_max],
            valid,
        }
    }

    /// All entries valid, costs from `f(y, x, d)`.
    pub fn from_fn(height: usize, width: usize, d_max: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut costs = Vec::with_capacity(height * width * d_max);
        for y in 0..height {
            for x in 0..width {
                for d in 0..d_max {
                    costs.push(f(y, x, d));
                }
            }
        }
        CostVolume {
            height,
            width,
            d_max,
            reference: Reference::Left,
            costs,
            valid: vec![true; height * width * d_max],
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, d: usize) -> usize {
        (y * self.width + x) * self.d_max + d
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, d: usize) -> f64 {
        self.costs[self.index(y, x, d)]
    }

    #[inline]
    pub fn is_valid(&self, y: usize, x: usize, d: usize) -> bool {
        self.valid[self.index(y, x, d)]
    }

    pub fn curve(&self, y: usize, x: usize) -> &[f64] {
        let i = self.index(y, x, 0);
        &self.costs[i..i + self.d_max]
    }

    pub fn valid_curve(&self, y: usize, x: usize) -> &[bool] {
        let i = self.index(y, x, 0);
        &self.valid[i..i + self.d_max]
    }

    pub fn same_shape(&self, other: &CostVolume) -> bool {
        (self.height, self.width, self.d_max) == (other.height, other.width, other.d_max)
    }

    /// Overwrite invalid entries with the largest finite valid cost.
    pub fn fill_invalid_with_max(&mut self) {
        let mx = self
            .costs
            .iter()
            .zip(&self.valid)
            .filter(|(c, v)| **v && c.is_finite())
            .map(|(c, _)| *c)
            .fold(f64::NEG_INFINITY, f64::max);
        let mx = if mx.is_finite() { mx } else { 0.0 };
        for (c, v) in self.costs.iter_mut().zip(&self.valid) {
            if !*v {
                *c = mx;
            }
        }
    }

    /// Per-pixel argmin over valid entries, smallest disparity on ties.
    /// Mirror along x and swap the reference view. A right-reference volume
    /// becomes a left-reference volume of the mirrored pair and vice versa.
    pub fn mirrored(&self) -> CostVolume {
        let (w, dm) = (self.width, self.d_max);
        let mut out = self.clone();
        out.reference = self.reference.other();
        for y in 0..self.height {
            for x in 0..w {
                let src = self.index(y, x, 0);
                let dst = self.index(y, w - 1 - x, 0);
                out.costs[dst..dst + dm].copy_from_slice(&self.costs[src..src + dm]);
                out.valid[dst..dst + dm].copy_from_slice(&self.valid[src..src + dm]);
            }
        }
        out
    }

    pub fn wta(&self) -> DisparityMap {
        let mut out = DisparityMap::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.curve(y, x);
                let v = self.valid_curve(y, x);
                let mut best = None;
                for d in 0..self.d_max {
                    if v[d] && best.is_none_or(|(_, b)| c[d] < b) {
                        best = Some((d, c[d]));
                    }
                }
                let i = y * self.width + x;
                match best {
                    Some((d, _)) => out.data[i] = d as f64,
                    None => out.valid[i] = false,
                }
            }
        }
        out
    }

    /// Dump as `.cvol`: `u32` LE height, width, D, then D planes of `H×W`
    /// little-endian `f32` costs.
    pub fn write_cvol<W: Write>(&self, mut w: W) -> Result<()> {
        for v in [self.height, self.width, self.d_max] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for d in 0..self.d_max {
            for y in 0..self.height {
                for x in 0..self.width {
                    w.write_all(&(self.at(y, x, d) as f32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_cvol`](Self::write_cvol). The format carries no
    /// validity, so it is rebuilt from the left-reference geometry.
    pub fn read_cvol<R: Read>(mut r: R) -> Result<Self> {
        let mut hdr = [0u8; 12];
        r.read_exact(&mut hdr)
            .map_err(|_| Error::Format("truncated .cvol header".into()))?;
        let dim = |i: usize| u32::from_le_bytes(hdr[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (h, w, d) = (dim(0), dim(1), dim(2));
        if h.saturating_mul(w).saturating_mul(d) > 1 << 31 {
            return Err(Error::Format("implausible .cvol extents".into()));
        }
        let mut vol = CostVolume::new(h, w, d, Reference::Left);
        let mut buf = vec![0u8; h * w * 4];
        for di in 0..d {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated .cvol data".into()))?;
            for (p, c) in buf.chunks_exact(4).enumerate() {
                let i = p * d + di;
                vol.costs[i] = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
        }
        Ok(vol)
    }

    pub fn save_cvol(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_cvol(BufWriter::new(File::create(path)?))
    }

    pub fn load_cvol(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_cvol(BufReader::new(File::open(path)?))
    }
}
