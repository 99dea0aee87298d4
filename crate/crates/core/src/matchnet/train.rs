use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::hybrid_loss;
use super::{MatchNet, SkipMode};
use crate::error::{Error, Result};
use crate::nncore::{sgd_step, Gradients, Tape, Tensor};

/// A left patch with a matching and a non-matching right patch, all of
/// receptive-field size and centered on the same image row.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPairSample {
    pub left: Tensor,
    pub positive: Tensor,
    pub negative: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherTrainConfig {
    pub alpha: f64,
    pub margin: f64,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MatcherTrainConfig {
    fn default() -> Self {
        MatcherTrainConfig {
            alpha: 0.8,
            margin: 0.2,
            lr: 0.003,
            momentum: 0.9,
            batch_size: 128,
            epochs: 14,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// `(λ0, λ1, λ2)` per outer block at the end of the epoch.
    pub lambdas: Vec<[f64; 3]>,
}

#[derive(Clone, Debug)]
pub struct TrainedMatcher {
    pub net: MatchNet,
    pub initial_loss: f64,
    pub log: Vec<EpochRecord>,
}

impl TrainedMatcher {
    /// CSV with columns `epoch,loss,b0_l0,b0_l1,b0_l2,b1_l0,...`.
    pub fn write_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_log_csv(&mut w, self.net.outer_blocks().len(), &self.log)
    }
}

pub(crate) fn write_log_csv<W: Write>(w: &mut W, blocks: usize, log: &[EpochRecord]) -> Result<()> {
    write!(w, "epoch,loss")?;
    for b in 0..blocks {
        write!(w, ",b{b}_l0,b{b}_l1,b{b}_l2")?;
    }
    writeln!(w)?;
    for r in log {
        write!(w, "{},{}", r.epoch, r.loss)?;
        for l in &r.lambdas {
            write!(w, ",{},{},{}", l[0], l[1], l[2])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn stack(samples: &[&PatchPairSample]) -> Result<Tensor> {
    let s = samples[0].left.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let n = samples.len() * 3;
    let plane = h * w;
    let mut data = vec![0.0; c * n * plane];
    let groups: [&dyn Fn(&PatchPairSample) -> &Tensor; 3] = [&|p| &p.left, &|p| &p.positive, &|p| &p.negative];
    for (gi, get) in groups.iter().enumerate() {
        for (si, sample) in samples.iter().enumerate() {
            let t = get(sample);
            if t.shape() != s {
                return Err(Error::Input(format!(
                    "patch shape {:?} differs from {:?}",
                    t.shape(),
                    s
                )));
            }
            let idx = gi * samples.len() + si;
            for ci in 0..c {
                data[(ci * n + idx) * plane..][..plane].copy_from_slice(&t.data()[ci * plane..][..plane]);
            }
        }
    }
    Tensor::new(vec![c, n, h, w], data)
}

/// Mean hybrid loss over `batch` and, when `with_grads`, its gradients.
pub(crate) fn batch_loss(
    net: &MatchNet,
    batch: &[&PatchPairSample],
    cfg: &MatcherTrainConfig,
    with_grads: bool,
) -> Result<(f64, Option<Gradients>)> {
    let decision = net
        .decision
        .as_ref()
        .ok_or_else(|| Error::State("training needs the decision head".into()))?;
    let rf = net.receptive_field();
    if batch[0].left.shape() != [net.config.in_channels, rf, rf] {
        return Err(Error::Input(format!(
            "patches must be [{}, {rf}, {rf}], got {:?}",
            net.config.in_channels,
            batch[0].left.shape()
        )));
    }
    let b = batch.len();
    let mut tape = if with_grads {
        Tape::new(&net.params)
    } else {
        Tape::inference(&net.params)
    };
    let x = tape.input(stack(batch)?);
    let u = net.description.forward(&mut tape, x, SkipMode::Highway)?;
    let f = net.config.features;
    let u = tape.reshape(u, vec![f, 3 * b])?;
    let ul = tape.columns(u, 0, b)?;
    let up = tape.columns(u, b, b)?;
    let un = tape.columns(u, 2 * b, b)?;
    let s_pos = tape.dot(ul, up)?;
    let s_neg = tape.dot(ul, un)?;
    let pair_pos = tape.concat(ul, up)?;
    let pair_neg = tape.concat(ul, un)?;
    let v_pos = decision.forward(&mut tape, pair_pos)?;
    let v_neg = decision.forward(&mut tape, pair_neg)?;

    const EPS: f64 = 1e-12;
    let mut total = 0.0;
    let mut seeds = [vec![0.0; b], vec![0.0; b], vec![0.0; b], vec![0.0; b]];
    for i in 0..b {
        let vp = tape.value(v_pos).data()[i].clamp(EPS, 1.0 - EPS);
        let vn = tape.value(v_neg).data()[i].clamp(EPS, 1.0 - EPS);
        let l = hybrid_loss(
            vp,
            vn,
            tape.value(s_pos).data()[i],
            tape.value(s_neg).data()[i],
            cfg.alpha,
            cfg.margin,
            net.config.xent_as_printed,
        )?;
        total += l.loss;
        seeds[0][i] = l.d_v_pos / b as f64;
        seeds[1][i] = l.d_v_neg / b as f64;
        seeds[2][i] = l.d_s_pos / b as f64;
        seeds[3][i] = l.d_s_neg / b as f64;
    }
    let loss = total / b as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite matcher loss".into()));
    }
    if !with_grads {
        return Ok((loss, None));
    }
    let [a, bb, c, d] = seeds;
    let grads = tape.backward_seeded(&[(v_pos, a), (v_neg, bb), (s_pos, c), (s_neg, d)])?;
    Ok((loss, Some(grads)))
}

/// Mean loss over a whole dataset without updating anything.
pub fn evaluate_matcher_loss(net: &MatchNet, samples: &[PatchPairSample], cfg: &MatcherTrainConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let refs: Vec<&PatchPairSample> = samples.iter().collect();
    let mut total = 0.0;
    for chunk in refs.chunks(cfg.batch_size.max(1)) {
        total += batch_loss(net, chunk, cfg, false)?.0 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Train description tower and decision head jointly with the hybrid loss.
pub fn train_matcher(
    mut net: MatchNet,
    samples: &[PatchPairSample],
    cfg: &MatcherTrainConfig,
) -> Result<TrainedMatcher> {
    if samples.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let initial_loss = evaluate_matcher_loss(&net, samples, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&PatchPairSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grads) = batch_loss(&net, &batch, cfg, true)?;
            total += loss * batch.len() as f64;
            net.params.zero_grads();
            grads.expect("requested").apply_to(&mut net.params)?;
            sgd_step(&mut net.params, cfg.lr, cfg.momentum)?;
        }
        log.push(EpochRecord {
            epoch,
            loss: total / samples.len() as f64,
            lambdas: net.lambdas(),
        });
    }
    Ok(TrainedMatcher { net, initial_loss, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matchnet::{MatchNetConfig, Mode};
    use rand::Rng;

    fn toy_samples(n: usize, rf: usize, seed: u64) -> Vec<PatchPairSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..rf * rf).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        (0..n)
            .map(|_| {
                let l = patch(&mut rng);
                let p: Vec<f64> = l.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
                let q = patch(&mut rng);
                PatchPairSample {
                    left: Tensor::new(vec![1, rf, rf], l).unwrap(),
                    positive: Tensor::new(vec![1, rf, rf], p).unwrap(),
                    negative: Tensor::new(vec![1, rf, rf], q).unwrap(),
                }
            })
            .collect()
    }

    fn cfg() -> MatchNetConfig {
        MatchNetConfig {
            mode: Mode::Fast,
            features: 8,
            decision_width: 16,
            decision_layers: 2,
            ..Default::default()
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let net = MatchNet::new(cfg(), 1);
        assert!(matches!(
            train_matcher(net, &[], &MatcherTrainConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn every_lambda_receives_a_gradient() {
        let net = MatchNet::new(cfg(), 2);
        let samples = toy_samples(16, 9, 3);
        let refs: Vec<&PatchPairSample> = samples.iter().collect();
        let (_, g) = batch_loss(&net, &refs, &MatcherTrainConfig::default(), true).unwrap();
        let g = g.unwrap();
        for id in net.lambda_ids() {
            let d = g.param(id).unwrap()[0];
            assert!(d != 0.0 && d.is_finite());
        }
    }

    #[test]
    fn loss_drops_after_five_epochs() {
        let net = MatchNet::new(cfg(), 4);
        let samples = toy_samples(256, 9, 5);
        let tc = MatcherTrainConfig {
            epochs: 5,
            batch_size: 32,
            lr: 0.01,
            ..Default::default()
        };
        let out = train_matcher(net, &samples, &tc).unwrap();
        assert_eq!(out.log.len(), 5);
        assert!(out.log[4].loss < out.initial_loss);
        let mut csv = Vec::new();
        out.write_log_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("epoch,loss,b0_l0,b0_l1,b0_l2,b1_l0"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let samples = toy_samples(64, 9, 6);
        let tc = MatcherTrainConfig {
            epochs: 2,
            batch_size: 16,
            ..Default::default()
        };
        let a = train_matcher(MatchNet::new(cfg(), 7), &samples, &tc).unwrap();
        let b = train_matcher(MatchNet::new(cfg(), 7), &samples, &tc).unwrap();
        assert_eq!(a.log, b.log);
    }
}
