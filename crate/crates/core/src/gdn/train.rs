use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{argmax_columns, SmoothTarget};
use super::{DisparityPatch, Gdn, PATCH};
use crate::error::{Error, Result};
use crate::nncore::{sgd_step, Gradients, StepSchedule, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdnTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// First epoch (1-based) trained at the decayed rate.
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub xent_weight: f64,
    pub confidence_weight: f64,
    pub seed: u64,
}

impl Default for GdnTrainConfig {
    fn default() -> Self {
        GdnTrainConfig {
            lr: 0.003,
            momentum: 0.9,
            batch_size: 128,
            epochs: 15,
            decay_epoch: 12,
            decay_factor: 0.1,
            xent_weight: 0.85,
            confidence_weight: 0.15,
            seed: 1,
        }
    }
}

impl GdnTrainConfig {
    pub fn schedule(&self) -> StepSchedule {
        StepSchedule {
            base: self.lr,
            decay_epoch: self.decay_epoch,
            factor: self.decay_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdnEpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Share of reflective labels equal to 1 over the epoch's forward passes.
    pub positive_fraction: f64,
    /// 1-px accuracy on the training set after the epoch.
    pub train_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedGdn {
    pub net: Gdn,
    pub log: Vec<GdnEpochRecord>,
}

impl TrainedGdn {
    pub fn write_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,lr,loss,positive_fraction,train_accuracy")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch, r.lr, r.loss, r.positive_fraction, r.train_accuracy
            )?;
        }
        Ok(())
    }
}

fn stack(batch: &[&DisparityPatch], d: usize) -> Result<Tensor> {
    let n = batch.len();
    let plane = PATCH * PATCH;
    let mut data = vec![0.0; d * n * plane];
    for (j, p) in batch.iter().enumerate() {
        if p.costs.shape() != [d, PATCH, PATCH] {
            return Err(Error::Input(format!(
                "patch shape {:?}, expected [{d}, 9, 9]",
                p.costs.shape()
            )));
        }
        for c in 0..d {
            data[(c * n + j) * plane..][..plane].copy_from_slice(&p.costs.data()[c * plane..][..plane]);
        }
    }
    Tensor::new(vec![d, n, PATCH, PATCH], data)
}

pub(crate) struct BatchResult {
    pub loss: f64,
    pub positives: usize,
    pub grads: Gradients,
}

/// Forward, dynamic labels and backward for one batch. With
/// `confidence_head = false` the confidence loss is not seeded at all.
pub(crate) fn batch_step(
    net: &Gdn,
    batch: &[&DisparityPatch],
    cfg: &GdnTrainConfig,
    confidence_head: bool,
) -> Result<BatchResult> {
    let d = net.config.d_max;
    let n = batch.len();
    let mut tape = Tape::new(&net.params);
    let x = tape.input(stack(batch, d)?);
    let heads = net.heads(&mut tape, x)?;
    let logp = tape.value(heads.log_probs).data();
    let conf = tape.value(heads.confidence).data();
    let pred = argmax_columns(tape.value(heads.scores));
    let mut seed_lp = vec![0.0; d * n];
    let mut seed_c = vec![0.0; n];
    let mut total = 0.0;
    let mut positives = 0;
    const EPS: f64 = 1e-12;
    for (j, p) in batch.iter().enumerate() {
        let t = SmoothTarget::new(d, p.gt)?;
        let mut xent = 0.0;
        for i in 0..d {
            xent -= t.weights[i] * logp[i * n + j];
            seed_lp[i * n + j] = -cfg.xent_weight * t.weights[i] / n as f64;
        }
        let label = ((pred[j] as f64 - p.gt).abs() < 1.0) as u8 as f64;
        positives += label as usize;
        let c = conf[j].clamp(EPS, 1.0 - EPS);
        let bce = -(label * c.ln() + (1.0 - label) * (1.0 - c).ln());
        seed_c[j] = cfg.confidence_weight * (c - label) / (c * (1.0 - c)) / n as f64;
        total += cfg.xent_weight * xent + cfg.confidence_weight * bce;
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite GDN loss".into()));
    }
    let mut seeds = vec![(heads.log_probs, seed_lp)];
    if confidence_head {
        seeds.push((heads.confidence, seed_c));
    }
    let grads = tape.backward_seeded(&seeds)?;
    Ok(BatchResult { loss, positives, grads })
}

/// Fraction of patches predicted within one pixel.
pub fn gdn_accuracy(net: &Gdn, patches: &[DisparityPatch]) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let refs: Vec<&DisparityPatch> = patches.iter().collect();
    let mut hits = 0;
    for chunk in refs.chunks(256) {
        let mut tape = Tape::inference(&net.params);
        let x = tape.input(stack(chunk, net.config.d_max)?);
        let h = net.heads(&mut tape, x)?;
        let pred = argmax_columns(tape.value(h.scores));
        hits += pred
            .iter()
            .zip(chunk)
            .filter(|(p, c)| (**p as f64 - c.gt).abs() < 1.0)
            .count();
    }
    Ok(hits as f64 / patches.len() as f64)
}

/// Joint training of the disparity scores and the reflective confidence.
pub fn gdn_train(mut net: Gdn, patches: &[DisparityPatch], cfg: &GdnTrainConfig) -> Result<TrainedGdn> {
    if patches.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let sched = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let lr = sched.lr(epoch);
        order.shuffle(&mut rng);
        let (mut total, mut positives) = (0.0, 0);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&DisparityPatch> = chunk.iter().map(|&i| &patches[i]).collect();
            let r = batch_step(&net, &batch, cfg, true)?;
            total += r.loss * batch.len() as f64;
            positives += r.positives;
            net.params.zero_grads();
            r.grads.apply_to(&mut net.params)?;
            sgd_step(&mut net.params, lr, cfg.momentum)?;
        }
        log.push(GdnEpochRecord {
            epoch,
            lr,
            loss: total / patches.len() as f64,
            positive_fraction: positives as f64 / patches.len() as f64,
            train_accuracy: gdn_accuracy(&net, patches)?,
        });
    }
    Ok(TrainedGdn { net, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdn::{reflective_label, GdnConfig};
    use rand::Rng;

    /// Noise plus one strongly negative disparity channel at the rounded
    /// (sub-pixel) label.
    fn toy(n: usize, d: usize, seed: u64) -> Vec<DisparityPatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let k = rng.gen_range(0..d);
                let gt = (k as f64 + rng.gen_range(-0.45..0.45)).clamp(0.0, (d - 1) as f64);
                let mut data: Vec<f64> = (0..d * 81).map(|_| rng.gen_range(-0.2..0.2)).collect();
                data[k * 81..(k + 1) * 81].iter_mut().for_each(|v| *v = -0.9 + *v * 0.1);
                DisparityPatch {
                    costs: Tensor::new(vec![d, 9, 9], data).unwrap(),
                    gt,
                }
            })
            .collect()
    }

    fn net(d: usize, seed: u64) -> Gdn {
        Gdn::new(
            GdnConfig {
                d_max: d,
                channels: 8,
                confidence_width: 8,
            },
            seed,
        )
    }

    #[test]
    fn defaults() {
        let c = GdnTrainConfig::default();
        assert_eq!(c.xent_weight + c.confidence_weight, 1.0);
        assert_eq!((c.batch_size, c.epochs, c.momentum), (128, 15, 0.9));
        assert_eq!(c.schedule().lr(11), 0.003);
        assert!((c.schedule().lr(12) - 0.0003).abs() < 1e-18);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            gdn_train(net(4, 1), &[], &GdnTrainConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn learns_the_negative_channel() {
        let train = toy(1500, 6, 1);
        let held = toy(200, 6, 2);
        let cfg = GdnTrainConfig {
            epochs: 15,
            batch_size: 32,
            lr: 0.1,
            decay_epoch: 12,
            ..Default::default()
        };
        let out = gdn_train(net(6, 3), &train, &cfg).unwrap();
        let acc = gdn_accuracy(&out.net, &held).unwrap();
        assert!(acc >= 0.95);
        let last = out.log.last().unwrap();
        assert!((last.positive_fraction - last.train_accuracy).abs() <= 0.05);
    }

    #[test]
    fn labels_follow_the_network_state() {
        let mut g = net(5, 4);
        for p in g.params.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let patch = Tensor::zeros(&[5, 9, 9]);
        let bias = g.fc3.bias;
        g.params.get_mut(bias).value.data_mut()[2] = 1.0;
        assert_eq!(reflective_label(&g.forward(&patch).unwrap().scores, 2.0), 1);
        g.params.get_mut(bias).value.data_mut()[4] = 2.0;
        assert_eq!(reflective_label(&g.forward(&patch).unwrap().scores, 2.0), 0);
    }

    #[test]
    fn zero_confidence_weight_leaves_fc3_gradients_untouched() {
        let g = net(5, 5);
        let data = toy(16, 5, 6);
        let batch: Vec<&DisparityPatch> = data.iter().collect();
        let cfg = GdnTrainConfig {
            confidence_weight: 0.0,
            ..Default::default()
        };
        let a = batch_step(&g, &batch, &cfg, true).unwrap().grads;
        let b = batch_step(&g, &batch, &cfg, false).unwrap().grads;
        for id in [g.fc3.weight, g.fc3.bias, g.trunk[0].weight] {
            assert_eq!(a.param(id).unwrap(), b.param(id).unwrap());
        }
    }
}
