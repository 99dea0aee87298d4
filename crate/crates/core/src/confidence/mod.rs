//! Confidence measures on cost curves and their sparsification AUC.
//!
//! Every measure is oriented so that larger means more reliable. The
//! curve-based measures expect non-negative costs; see
//! [`shift_nonnegative`].

mod auc;
mod measures;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use auc::{auc_sparsification, sparsification_curve};
pub use measures::{cur, curve_minima, lrd, msm, nem, pkrn, prob, CurveMinima, EPS};

use crate::costproc::{CostVolume, Reference};
use crate::error::{Error, Result};
use crate::maps::ConfidenceMap;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Msm,
    Prob,
    Cur,
    Pkrn,
    Nem,
    Lrd,
    Reflective,
    Random,
}

impl Measure {
    pub const BASELINES: [Measure; 6] = [
        Measure::Msm,
        Measure::Prob,
        Measure::Cur,
        Measure::Pkrn,
        Measure::Nem,
        Measure::Lrd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Msm => "msm",
            Measure::Prob => "prob",
            Measure::Cur => "cur",
            Measure::Pkrn => "pkrn",
            Measure::Nem => "nem",
            Measure::Lrd => "lrd",
            Measure::Reflective => "reflective",
            Measure::Random => "random",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::BASELINES.as_slice(), &[Measure::Reflective, Measure::Random]]
            .concat()
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown confidence measure '{s}'")))
    }
}

/// Everything the measures may read. Volumes must be non-negative.
#[derive(Clone, Copy)]
pub struct MeasureInputs<'a> {
    pub left: &'a CostVolume,
    pub right: Option<&'a CostVolume>,
    /// Per-pixel max softmax probability of the GDN scores.
    pub gdn_prob: Option<&'a ConfidenceMap>,
    /// The GDN confidence head output.
    pub reflective: Option<&'a ConfidenceMap>,
    pub seed: u64,
}

/// The valid part of a pixel's curve. Validity always forms a prefix in
/// `d` for either reference.
pub fn valid_curve(volume: &CostVolume, y: usize, x: usize) -> &[f64] {
    let n = volume.valid_curve(y, x).iter().take_while(|v| **v).count();
    &volume.curve(y, x)[..n.max(1)]
}

/// Subtract the smallest valid cost of both volumes so every cost is ≥ 0.
/// A shared shift keeps left-right differences intact.
pub fn shift_nonnegative(left: &CostVolume, right: Option<&CostVolume>) -> (CostVolume, Option<CostVolume>) {
    let min_of = |v: &CostVolume| {
        v.costs
            .iter()
            .zip(&v.valid)
            .filter(|(_, ok)| **ok)
            .map(|(c, _)| *c)
            .fold(f64::INFINITY, f64::min)
    };
    let mut m = min_of(left);
    if let Some(r) = right {
        m = m.min(min_of(r));
    }
    let m = if m.is_finite() { m } else { 0.0 };
    let shift = |v: &CostVolume| {
        let mut out = v.clone();
        out.costs.iter_mut().for_each(|c| *c -= m);
        out
    };
    (shift(left), right.map(shift))
}

fn per_pixel(vol: &CostVolume, f: impl Fn(usize, usize) -> Result<f64> + Sync + Send) -> Result<ConfidenceMap> {
    let (h, w) = (vol.height, vol.width);
    let rows = par::try_map_range(h, |y| (0..w).map(|x| f(y, x)).collect::<Result<Vec<f64>>>())?;
    ConfidenceMap::new(h, w, rows.concat())
}

fn need<'a, T>(v: Option<&'a T>, what: &str) -> Result<&'a T> {
    v.ok_or_else(|| Error::Input(format!("measure needs {what}")))
}

/// Confidence map of one measure for the left view.
pub fn confidence_map(measure: Measure, inputs: &MeasureInputs) -> Result<ConfidenceMap> {
    let vol = inputs.left;
    if vol.reference != Reference::Left {
        return Err(Error::Input("confidence maps are computed for the left view".into()));
    }
    match measure {
        Measure::Msm => per_pixel(vol, |y, x| msm(valid_curve(vol, y, x))),
        Measure::Cur => per_pixel(vol, |y, x| cur(valid_curve(vol, y, x))),
        Measure::Pkrn => per_pixel(vol, |y, x| pkrn(valid_curve(vol, y, x))),
        Measure::Nem => per_pixel(vol, |y, x| nem(valid_curve(vol, y, x))),
        Measure::Lrd => {
            let right = need(inputs.right, "the right-reference volume")?;
            if !right.same_shape(vol) || right.reference != Reference::Right {
                return Err(Error::Input(
                    "right volume must be a right-reference volume of the same shape".into(),
                ));
            }
            per_pixel(vol, |y, x| {
                let lc = valid_curve(vol, y, x);
                let d1 = curve_minima(lc)?.d1;
                lrd(lc, valid_curve(right, y, x - d1))
            })
        }
        Measure::Prob => Ok(need(inputs.gdn_prob, "GDN probabilities")?.clone()),
        Measure::Reflective => Ok(need(inputs.reflective, "the reflective confidence")?.clone()),
        Measure::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
            let data = (0..vol.height * vol.width).map(|_| rng.gen::<f64>()).collect();
            ConfidenceMap::new(vol.height, vol.width, data)
        }
    }
}
