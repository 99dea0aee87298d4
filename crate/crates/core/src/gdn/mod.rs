//! Global disparity network.
//!
//! A 9×9 window of the normalized cost volume (one channel per disparity)
//! passes through four unpadded 3×3 convolutions down to 1×1, then FC3
//! produces one score per disparity. The confidence head (FC4, FC5) reads
//! the log-softmax of those scores and ends in a sigmoid.

mod loss;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{argmax, reflective_label, smooth_weight, weighted_xent_loss, SmoothTarget};
pub use train::{gdn_train, GdnEpochRecord, GdnTrainConfig, TrainedGdn};

use crate::costproc::CostVolume;
use crate::error::{Error, Result};
use crate::maps::{ConfidenceMap, DisparityMap};
use crate::nncore::{Checkpoint, Conv2d, LayerSpec, Linear, ParamSet, Tape, Tensor, Var};
use crate::par;

pub const GDN_KIND: &str = "gdn";
/// Side of the cost patch seen by the network.
pub const PATCH: usize = 9;
const RADIUS: usize = PATCH / 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdnConfig {
    pub d_max: usize,
    /// Channels of the convolutional trunk.
    pub channels: usize,
    /// Width of FC4.
    pub confidence_width: usize,
}

impl GdnConfig {
    pub fn new(d_max: usize) -> Self {
        GdnConfig {
            d_max,
            channels: 64,
            confidence_width: 64,
        }
    }
}

/// A `[D, 9, 9]` cost window and the disparity of its center.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityPatch {
    pub costs: Tensor,
    pub gt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdnOutput {
    pub scores: Vec<f64>,
    pub confidence: f64,
}

impl GdnOutput {
    pub fn disparity(&self) -> usize {
        argmax(&self.scores)
    }
}

/// Whole-image GDN output.
#[derive(Clone, Debug, PartialEq)]
pub struct GdnPrediction {
    pub disparity: DisparityMap,
    pub confidence: ConfidenceMap,
    /// Largest softmax probability of the scores.
    pub prob: ConfidenceMap,
}

/// Tape handles of one forward pass.
pub(crate) struct Heads {
    pub scores: Var,
    pub log_probs: Var,
    pub confidence: Var,
}

#[derive(Clone, Debug)]
pub struct Gdn {
    pub config: GdnConfig,
    pub params: ParamSet,
    pub trunk: Vec<Conv2d>,
    pub fc3: Linear,
    pub fc4: Linear,
    pub fc5: Linear,
}

impl Gdn {
    pub fn new(config: GdnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let c = config.channels;
        let trunk = (0..4)
            .map(|i| {
                let c_in = if i == 0 { config.d_max } else { c };
                Conv2d::new(&mut params, &format!("gdn.conv{i}"), c_in, c, 3, 0, &mut rng)
            })
            .collect();
        let fc3 = Linear::new(&mut params, "gdn.fc3", c, config.d_max, &mut rng);
        let fc4 = Linear::new(&mut params, "gdn.fc4", config.d_max, config.confidence_width, &mut rng);
        let fc5 = Linear::new(&mut params, "gdn.fc5", config.confidence_width, 1, &mut rng);
        Gdn {
            config,
            params,
            trunk,
            fc3,
            fc4,
            fc5,
        }
    }

    /// `[D, N, h, w]` → trunk features `[C, N·(h−8)·(w−8)]`.
    fn trunk_forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut y = x;
        for conv in &self.trunk {
            let z = conv.forward(tape, y)?;
            y = tape.relu(z);
        }
        let s = tape.value(y).shape().to_vec();
        let cols = s[1..].iter().product();
        tape.reshape(y, vec![s[0], cols])
    }

    pub(crate) fn heads(&self, tape: &mut Tape, x: Var) -> Result<Heads> {
        let h = self.trunk_forward(tape, x)?;
        let scores = self.fc3.forward(tape, h)?;
        let log_probs = tape.log_softmax(scores);
        let z = self.fc4.forward(tape, log_probs)?;
        let z = tape.relu(z);
        let z = self.fc5.forward(tape, z)?;
        let confidence = tape.sigmoid(z);
        Ok(Heads {
            scores,
            log_probs,
            confidence,
        })
    }

    fn check_depth(&self, d: usize) -> Result<()> {
        if d != self.config.d_max {
            return Err(Error::Config(format!(
                "cost depth {d} does not match the network's {}",
                self.config.d_max
            )));
        }
        Ok(())
    }

    /// Scores and confidence for one `[D, 9, 9]` patch.
    pub fn forward(&self, patch: &Tensor) -> Result<GdnOutput> {
        let s = patch.shape();
        if s.len() != 3 || s[1] != PATCH || s[2] != PATCH {
            return Err(Error::Input(format!("expected a [D, 9, 9] patch, got {s:?}")));
        }
        self.check_depth(s[0])?;
        let mut tape = Tape::inference(&self.params);
        let x = tape.input(patch.clone());
        let h = self.heads(&mut tape, x)?;
        Ok(GdnOutput {
            scores: tape.value(h.scores).data().to_vec(),
            confidence: tape.value(h.confidence).data()[0],
        })
    }

    /// Slide the network over a normalized volume with edge replication.
    pub fn predict_image(&self, volume: &CostVolume) -> Result<(DisparityMap, ConfidenceMap)> {
        let p = self.predict(volume)?;
        Ok((p.disparity, p.confidence))
    }

    /// Disparity, reflective confidence and max softmax probability per pixel.
    pub fn predict(&self, volume: &CostVolume) -> Result<GdnPrediction> {
        self.check_depth(volume.d_max)?;
        let (h, w, dm) = (volume.height, volume.width, volume.d_max);
        const BAND: usize = 16;
        let bands = h.div_ceil(BAND);
        type Band = (Vec<usize>, Vec<f64>, Vec<f64>);
        let parts = par::try_map_range(bands, |b| -> Result<Band> {
            let y0 = b * BAND;
            let rows = BAND.min(h - y0);
            let input = padded_band(volume, y0, rows);
            let mut tape = Tape::inference(&self.params);
            let x = tape.input(input);
            let heads = self.heads(&mut tape, x)?;
            let disp = loss::argmax_columns(tape.value(heads.scores));
            let lp = tape.value(heads.log_probs).data();
            let n = disp.len();
            let prob = disp.iter().enumerate().map(|(j, &d)| lp[d * n + j].exp()).collect();
            Ok((disp, tape.value(heads.confidence).data().to_vec(), prob))
        })?;
        let mut disp = Vec::with_capacity(h * w);
        let mut conf = Vec::with_capacity(h * w);
        let mut prob = Vec::with_capacity(h * w);
        for (d, c, p) in parts {
            disp.extend(d.into_iter().map(|v| v as f64));
            conf.extend(c);
            prob.extend(p);
        }
        debug_assert!(disp.iter().all(|d| *d < dm as f64));
        Ok(GdnPrediction {
            disparity: DisparityMap::from_values(h, w, disp)?,
            confidence: ConfidenceMap::new(h, w, conf)?,
            prob: ConfidenceMap::new(h, w, prob)?,
        })
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut v = Vec::new();
        for c in &self.trunk {
            v.push(c.spec.clone());
            v.push(LayerSpec::Relu);
        }
        v.extend([
            self.fc3.spec.clone(),
            LayerSpec::LogSoftmax,
            self.fc4.spec.clone(),
            LayerSpec::Relu,
            self.fc5.spec.clone(),
            LayerSpec::Sigmoid,
        ]);
        v
    }

    pub fn to_checkpoint(&self, history: serde_json::Value) -> Checkpoint {
        let cfg = serde_json::to_value(&self.config).expect("plain struct");
        Checkpoint::from_params(GDN_KIND, cfg, self.layer_specs(), &self.params, history)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(GDN_KIND)?;
        let config: GdnConfig =
            serde_json::from_value(ck.header.config.clone()).map_err(|e| Error::Format(format!("gdn config: {e}")))?;
        let mut net = Gdn::new(config, 0);
        net.params.load_values(&ck.values)?;
        Ok(net)
    }
}

#[inline]
fn clamp(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

/// Planar `[D, 1, rows + 8, W + 8]` slice of the edge-replicated volume
/// covering output rows `y0..y0 + rows`.
fn padded_band(volume: &CostVolume, y0: usize, rows: usize) -> Tensor {
    let (h, w, dm) = (volume.height, volume.width, volume.d_max);
    let ph = rows + 2 * RADIUS;
    let pw = w + 2 * RADIUS;
    let mut data = vec![0.0; dm * ph * pw];
    for py in 0..ph {
        let sy = clamp(y0 as isize + py as isize - RADIUS as isize, h);
        for px in 0..pw {
            let sx = clamp(px as isize - RADIUS as isize, w);
            let curve = volume.curve(sy, sx);
            for (d, c) in curve.iter().enumerate() {
                data[(d * ph + py) * pw + px] = *c;
            }
        }
    }
    Tensor::new(vec![dm, 1, ph, pw], data).expect("sized above")
}

/// The `[D, 9, 9]` window centered on `(y, x)`, edge-replicated.
pub fn extract_patch(volume: &CostVolume, y: usize, x: usize) -> Tensor {
    let (h, w, dm) = (volume.height, volume.width, volume.d_max);
    let mut data = vec![0.0; dm * PATCH * PATCH];
    for py in 0..PATCH {
        let sy = clamp(y as isize + py as isize - RADIUS as isize, h);
        for px in 0..PATCH {
            let sx = clamp(x as isize + px as isize - RADIUS as isize, w);
            for (d, c) in volume.curve(sy, sx).iter().enumerate() {
                data[(d * PATCH + py) * PATCH + px] = *c;
            }
        }
    }
    Tensor::new(vec![dm, PATCH, PATCH], data).expect("sized above")
}
