//! Constant-highway matching-cost network.
//!
//! A description tower maps an image patch to a descriptor through
//! alternating scaling convolutions (3×3, no padding, ReLU) and outer
//! blocks. Each outer block wraps two inner blocks, and every block ends in
//! a learned scalar skip gate:
//!
//! ```text
//! inner:  y1 = f1(y0) + λ1·y0          f(y) = relu(conv2(relu(conv1(y))))
//! outer:  y2 = f2(y1) + λ2·y1 + λ0·y0
//! ```
//!
//! The fast pipeline compares descriptors by dot product, the accurate one
//! through a fully-connected decision head on `[u_l; u_r]`.

mod lambda;
mod loss;
mod train;
mod volume;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::Image;
use crate::nncore::{Checkpoint, Conv2d, LayerSpec, Linear, ParamId, ParamSet, Tape, Tensor, Var};
use crate::par;

pub use lambda::{lambda_report, LambdaReport, LambdaRow};
pub use loss::{hybrid_loss, HybridLoss};
pub use train::{train_matcher, EpochRecord, MatcherTrainConfig, PatchPairSample, TrainedMatcher};
pub use volume::{build_cost_volume, cost_volume_from_descriptors, BuildStats, DescriptorMap};

pub const MATCHNET_KIND: &str = "matchnet";

/// Windows described per forward pass in [`MatchNet::describe_windows`].
const WINDOW_BATCH: usize = 64;

/// Speed/accuracy trade-off of the whole pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Four outer blocks, dot-product similarity, no cost aggregation.
    Fast,
    /// Five outer blocks, decision network, cross-based aggregation.
    Accurate,
}

impl Mode {
    pub fn outer_blocks(self) -> usize {
        match self {
            Mode::Fast => 4,
            Mode::Accurate => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fast => "fast",
            Mode::Accurate => "accurate",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Mode::Fast),
            "accurate" => Ok(Mode::Accurate),
            _ => Err(Error::Config(format!("unknown mode {s:?} (fast|accurate)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchNetConfig {
    pub mode: Mode,
    pub in_channels: usize,
    pub features: usize,
    pub decision_width: usize,
    pub decision_layers: usize,
    /// Unit-normalize descriptors so the hinge margin is scale-free.
    pub normalize: bool,
    /// Train the decision head with the cross-entropy exactly as printed,
    /// `−(log v₋ + log(1 − v₊))`, which makes `v` a non-match probability.
    pub xent_as_printed: bool,
}

impl Default for MatchNetConfig {
    fn default() -> Self {
        MatchNetConfig {
            mode: Mode::Fast,
            in_channels: 1,
            features: 64,
            decision_width: 128,
            decision_layers: 3,
            normalize: true,
            xent_as_printed: true,
        }
    }
}

impl MatchNetConfig {
    pub fn outer_blocks(&self) -> usize {
        self.mode.outer_blocks()
    }

    /// Side of the square receptive field: one scaling layer per outer block.
    pub fn receptive_field(&self) -> usize {
        2 * self.outer_blocks() + 1
    }
}

/// How block outputs are combined with their skip input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipMode {
    /// `f(y) + λ·y`.
    Highway,
    /// `f(y) + y`, ignoring the learned gates.
    Identity,
}

fn skip(tape: &mut Tape, f: Var, y: Var, lambda: ParamId, mode: SkipMode) -> Result<Var> {
    match mode {
        SkipMode::Highway => tape.highway_add(f, y, lambda),
        SkipMode::Identity => tape.add(f, y),
    }
}

#[derive(Clone, Debug)]
pub struct InnerBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub lambda: ParamId,
}

impl InnerBlock {
    fn new(params: &mut ParamSet, name: &str, ch: usize, rng: &mut ChaCha8Rng) -> Self {
        InnerBlock {
            conv1: Conv2d::new(params, &format!("{name}.conv1"), ch, ch, 3, 1, rng),
            conv2: Conv2d::new(params, &format!("{name}.conv2"), ch, ch, 3, 1, rng),
            lambda: params.add_lambda(format!("{name}.lambda")),
        }
    }

    /// The residual branch `relu(conv2(relu(conv1(y))))`.
    pub fn residual(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        let h = self.conv1.forward(tape, y)?;
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, h)?;
        Ok(tape.relu(h))
    }

    pub fn forward(&self, tape: &mut Tape, y: Var, mode: SkipMode) -> Result<Var> {
        let f = self.residual(tape, y)?;
        skip(tape, f, y, self.lambda, mode)
    }

    fn specs(&self) -> Vec<LayerSpec> {
        vec![
            self.conv1.spec.clone(),
            LayerSpec::Relu,
            self.conv2.spec.clone(),
            LayerSpec::Relu,
            LayerSpec::ConstantHighwayAdd { name: "inner".into() },
        ]
    }
}

#[derive(Clone, Debug)]
pub struct OuterBlock {
    pub inner1: InnerBlock,
    pub inner2: InnerBlock,
    pub lambda0: ParamId,
}

impl OuterBlock {
    fn new(params: &mut ParamSet, name: &str, ch: usize, rng: &mut ChaCha8Rng) -> Self {
        OuterBlock {
            inner1: InnerBlock::new(params, &format!("{name}.inner1"), ch, rng),
            inner2: InnerBlock::new(params, &format!("{name}.inner2"), ch, rng),
            lambda0: params.add_lambda(format!("{name}.lambda0")),
        }
    }

    pub fn forward(&self, tape: &mut Tape, y0: Var, mode: SkipMode) -> Result<Var> {
        let y1 = self.inner1.forward(tape, y0, mode)?;
        let y2 = self.inner2.forward(tape, y1, mode)?;
        skip(tape, y2, y0, self.lambda0, mode)
    }

    /// `(λ0, λ1, λ2)`.
    pub fn lambdas(&self, params: &ParamSet) -> [f64; 3] {
        [
            params.scalar(self.lambda0),
            params.scalar(self.inner1.lambda),
            params.scalar(self.inner2.lambda),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct DescriptionNet {
    pub stages: Vec<(Conv2d, OuterBlock)>,
    pub normalize: bool,
}

impl DescriptionNet {
    fn new(params: &mut ParamSet, cfg: &MatchNetConfig, rng: &mut ChaCha8Rng) -> Self {
        let stages = (0..cfg.outer_blocks())
            .map(|i| {
                let c_in = if i == 0 { cfg.in_channels } else { cfg.features };
                let scale = Conv2d::new(params, &format!("desc.scale{i}"), c_in, cfg.features, 3, 0, rng);
                let block = OuterBlock::new(params, &format!("desc.outer{i}"), cfg.features, rng);
                (scale, block)
            })
            .collect();
        DescriptionNet {
            stages,
            normalize: cfg.normalize,
        }
    }

    /// `[C, N, h, w]` → `[F, N, h − 2n, w − 2n]`, descriptors normalized along `F`.
    pub fn forward(&self, tape: &mut Tape, x: Var, mode: SkipMode) -> Result<Var> {
        let mut y = x;
        for (scale, block) in &self.stages {
            let s = scale.forward(tape, y)?;
            let s = tape.relu(s);
            y = block.forward(tape, s, mode)?;
        }
        Ok(if self.normalize { tape.l2_normalize(y) } else { y })
    }

    pub fn scaling_layers(&self) -> usize {
        self.stages.len()
    }

    fn specs(&self) -> Vec<LayerSpec> {
        let mut v = Vec::new();
        for (scale, block) in &self.stages {
            v.push(scale.spec.clone());
            v.push(LayerSpec::Relu);
            v.extend(block.inner1.specs());
            v.extend(block.inner2.specs());
            v.push(LayerSpec::ConstantHighwayAdd { name: "outer".into() });
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct DecisionNet {
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

impl DecisionNet {
    fn new(params: &mut ParamSet, cfg: &MatchNetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut n_in = 2 * cfg.features;
        let hidden = (0..cfg.decision_layers)
            .map(|i| {
                let l = Linear::new(params, &format!("decision.fc{i}"), n_in, cfg.decision_width, rng);
                n_in = cfg.decision_width;
                l
            })
            .collect();
        let output = Linear::new(params, "decision.out", n_in, 1, rng);
        DecisionNet { hidden, output }
    }

    /// `[2F, N]` → `v` of shape `[1, N]` in `(0, 1)`.
    pub fn forward(&self, tape: &mut Tape, pair: Var) -> Result<Var> {
        let mut h = pair;
        for l in &self.hidden {
            let z = l.forward(tape, h)?;
            h = tape.relu(z);
        }
        let z = self.output.forward(tape, h)?;
        Ok(tape.sigmoid(z))
    }

    fn specs(&self) -> Vec<LayerSpec> {
        let mut v = Vec::new();
        for l in &self.hidden {
            v.push(l.spec.clone());
            v.push(LayerSpec::Relu);
        }
        v.push(self.output.spec.clone());
        v.push(LayerSpec::Sigmoid);
        v
    }
}

/// Similarity of two descriptors and the matching cost derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub similarity: f64,
    pub cost: f64,
}

/// Dot-product similarity; the matching cost is its negation.
pub fn match_score_fast(u_l: &[f64], u_r: &[f64]) -> Result<Score> {
    if u_l.len() != u_r.len() {
        return Err(Error::Config(format!(
            "descriptor lengths differ: {} vs {}",
            u_l.len(),
            u_r.len()
        )));
    }
    let s: f64 = u_l.iter().zip(u_r).map(|(a, b)| a * b).sum();
    Ok(Score {
        similarity: s,
        cost: -s,
    })
}

/// Description tower plus (optionally) the decision head, with their weights.
#[derive(Clone, Debug)]
pub struct MatchNet {
    pub config: MatchNetConfig,
    pub params: ParamSet,
    pub description: DescriptionNet,
    pub decision: Option<DecisionNet>,
}

impl MatchNet {
    pub fn new(config: MatchNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let description = DescriptionNet::new(&mut params, &config, &mut rng);
        let decision = Some(DecisionNet::new(&mut params, &config, &mut rng));
        MatchNet {
            config,
            params,
            description,
            decision,
        }
    }

    /// Description tower only; usable for fast matching but not for the
    /// decision head.
    pub fn description_only(config: MatchNetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let description = DescriptionNet::new(&mut params, &config, &mut rng);
        MatchNet {
            config,
            params,
            description,
            decision: None,
        }
    }

    pub fn receptive_field(&self) -> usize {
        2 * self.description.scaling_layers() + 1
    }

    pub fn outer_blocks(&self) -> &[(Conv2d, OuterBlock)] {
        &self.description.stages
    }

    /// Every λ gate, outer block by outer block.
    pub fn lambdas(&self) -> Vec<[f64; 3]> {
        self.description
            .stages
            .iter()
            .map(|(_, b)| b.lambdas(&self.params))
            .collect()
    }

    pub fn lambda_ids(&self) -> Vec<ParamId> {
        self.description
            .stages
            .iter()
            .flat_map(|(_, b)| [b.lambda0, b.inner1.lambda, b.inner2.lambda])
            .collect()
    }

    /// Run the tower once over a `[C, H, W]` tensor: output
    /// `[F, H − 2n, W − 2n]` for `n` scaling layers. On a receptive-field
    /// sized patch this is the training-time forward pass.
    pub fn describe(&self, image: &Tensor) -> Result<Tensor> {
        self.describe_with(image, SkipMode::Highway)
    }

    pub fn describe_with(&self, image: &Tensor, mode: SkipMode) -> Result<Tensor> {
        self.check_input(image)?;
        let mut tape = Tape::inference(&self.params);
        let x = tape.input(image.clone());
        let y = self.description.forward(&mut tape, x, mode)?;
        Ok(tape.take(y))
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = image.shape();
        let rf = self.receptive_field();
        if s.len() != 3 || s[0] != self.config.in_channels {
            return Err(Error::Config(format!(
                "expected a [{}, H, W] image, got {:?}",
                self.config.in_channels, s
            )));
        }
        if s[1] < rf || s[2] < rf {
            return Err(Error::Input(format!(
                "image {}x{} smaller than the {rf}x{rf} receptive field",
                s[1], s[2]
            )));
        }
        Ok(())
    }

    /// Describe every receptive-field window of a `[C, H, W]` tensor on its
    /// own, as in training: output `[F, H − 2n, W − 2n]`. The padded inner
    /// convolutions would otherwise see past the window on a whole image.
    pub fn describe_windows(&self, image: &Tensor) -> Result<Tensor> {
        self.check_input(image)?;
        let s = image.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let rf = self.receptive_field();
        let (oh, ow) = (h - rf + 1, w - rf + 1);
        let n = oh * ow;
        let f = self.config.features;
        let src = image.data();
        let chunks = n.div_ceil(WINDOW_BATCH);
        let parts = par::try_map_range(chunks, |k| -> Result<Vec<f64>> {
            let (lo, hi) = (k * WINDOW_BATCH, ((k + 1) * WINDOW_BATCH).min(n));
            let m = hi - lo;
            let mut batch = vec![0.0; c * m * rf * rf];
            for ch in 0..c {
                for (j, p) in (lo..hi).enumerate() {
                    let (y0, x0) = (p / ow, p % ow);
                    for dy in 0..rf {
                        let from = ch * h * w + (y0 + dy) * w + x0;
                        let to = ((ch * m + j) * rf + dy) * rf;
                        batch[to..to + rf].copy_from_slice(&src[from..from + rf]);
                    }
                }
            }
            let mut tape = Tape::inference(&self.params);
            let x = tape.input(Tensor::new(vec![c, m, rf, rf], batch)?);
            let y = self.description.forward(&mut tape, x, SkipMode::Highway)?;
            Ok(tape.take(y).into_data())
        })?;
        let mut out = vec![0.0; f * n];
        for (k, part) in parts.iter().enumerate() {
            let lo = k * WINDOW_BATCH;
            let m = part.len() / f;
            for ch in 0..f {
                out[ch * n + lo..ch * n + lo + m].copy_from_slice(&part[ch * m..(ch + 1) * m]);
            }
        }
        Tensor::new(vec![f, oh, ow], out)
    }

    /// Full-resolution descriptor map `[F, H, W]`: each plane standardized,
    /// zero-padded by the receptive-field radius, then described window by
    /// window.
    pub fn describe_image(&self, image: &Image) -> Result<Tensor> {
        let padded = self.prepare_image(image)?;
        let t = Tensor::new(vec![padded.channels, padded.height, padded.width], padded.data)?;
        self.describe_windows(&t)
    }

    /// Standardize and pad an image so that `describe` returns one
    /// descriptor per original pixel.
    pub fn prepare_image(&self, image: &Image) -> Result<Image> {
        if image.channels != self.config.in_channels {
            return Err(Error::Config(format!(
                "network expects {} channels, image has {}",
                self.config.in_channels, image.channels
            )));
        }
        Ok(image.standardized().padded(self.description.scaling_layers()))
    }

    /// Decision-head output `v` and the matching cost for one descriptor pair.
    pub fn match_score_accurate(&self, u_l: &[f64], u_r: &[f64]) -> Result<Score> {
        if u_l.len() != u_r.len() || u_l.len() != self.config.features {
            return Err(Error::Config(format!(
                "descriptor lengths {} and {} for a {}-feature network",
                u_l.len(),
                u_r.len(),
                self.config.features
            )));
        }
        let pair: Vec<f64> = u_l.iter().chain(u_r).copied().collect();
        let v = self.decide(Tensor::from_vec(pair))?[0];
        Ok(Score {
            similarity: v,
            cost: self.decision_cost(v),
        })
    }

    /// Run the decision head on a `[2F, N]` batch of concatenated pairs.
    pub fn decide(&self, pairs: Tensor) -> Result<Vec<f64>> {
        let decision = self
            .decision
            .as_ref()
            .ok_or_else(|| Error::State("network has no decision head".into()))?;
        let mut tape = Tape::inference(&self.params);
        let x = tape.input(pairs);
        let v = decision.forward(&mut tape, x)?;
        Ok(tape.take(v).into_data())
    }

    /// Probability that a pair matches, given the training convention.
    pub fn match_probability(&self, v: f64) -> f64 {
        if self.config.xent_as_printed {
            1.0 - v
        } else {
            v
        }
    }

    /// Matching cost from a decision output: the negated match probability.
    pub fn decision_cost(&self, v: f64) -> f64 {
        -self.match_probability(v)
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut v = self.description.specs();
        if let Some(d) = &self.decision {
            v.extend(d.specs());
        }
        v
    }

    pub fn to_checkpoint(&self, history: serde_json::Value) -> Checkpoint {
        let cfg = serde_json::json!({
            "net": self.config,
            "decision": self.decision.is_some(),
        });
        Checkpoint::from_params(MATCHNET_KIND, cfg, self.layer_specs(), &self.params, history)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(MATCHNET_KIND)?;
        let config: MatchNetConfig = serde_json::from_value(ck.header.config["net"].clone())
            .map_err(|e| Error::Format(format!("matchnet config: {e}")))?;
        let has_decision = ck.header.config["decision"].as_bool().unwrap_or(true);
        let mut net = if has_decision {
            MatchNet::new(config, 0)
        } else {
            MatchNet::description_only(config, 0)
        };
        net.params.load_values(&ck.values)?;
        Ok(net)
    }
}
