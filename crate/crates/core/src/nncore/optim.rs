use super::param::ParamSet;
use crate::error::{Error, Result};

/// Classical momentum SGD: `v ← μ·v + g`, `θ ← θ − lr·v`.
///
/// Velocity buffers live on the parameters and persist across calls.
pub fn sgd_step(params: &mut ParamSet, lr: f64, momentum: f64) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.value.grad().is_none()) {
        return Err(Error::State(format!("parameter {} has no gradient", p.name)));
    }
    for p in params.iter_mut() {
        let grad = p.value.grad().expect("checked above").to_vec();
        let vel = p.velocity.get_or_insert_with(|| vec![0.0; grad.len()]);
        for (v, g) in vel.iter_mut().zip(&grad) {
            *v = momentum * *v + g;
        }
        let vel = vel.clone();
        for (w, v) in p.value.data_mut().iter_mut().zip(&vel) {
            *w -= lr * v;
        }
    }
    Ok(())
}

/// Step-decay schedule: `base` until `decay_epoch`, then `base·factor`.
/// Epochs are counted from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub base: f64,
    pub decay_epoch: usize,
    pub factor: f64,
}

impl StepSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.base * self.factor
        } else {
            self.base
        }
    }
}
