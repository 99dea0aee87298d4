use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SceneKind, SceneSpec};
use crate::costproc::{CbcaParams, PostprocessConfig, SgmParams};
use crate::error::{Error, Result};
use crate::gdn::{GdnConfig, GdnTrainConfig};
use crate::matchnet::{MatchNetConfig, MatcherTrainConfig, Mode};
use crate::refine::RefinementConfig;

/// Every tunable of a run in one flat table. Loaded from and saved as
/// flat TOML; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub channels: usize,
    pub d_max: usize,
    pub seed: u64,

    pub features: usize,
    pub decision_width: usize,
    pub decision_layers: usize,
    pub normalize: bool,
    pub xent_as_printed: bool,
    pub alpha: f64,
    pub margin: f64,
    pub matcher_lr: f64,
    pub matcher_momentum: f64,
    pub matcher_batch: usize,
    pub matcher_epochs: usize,
    pub neg_low: f64,
    pub neg_high: f64,
    pub matcher_samples_per_scene: usize,

    pub cbca_tau: f64,
    pub cbca_l_max: usize,
    pub sgm_p1: f64,
    pub sgm_p2: f64,

    pub gdn_channels: usize,
    pub gdn_confidence_width: usize,
    pub gdn_lr: f64,
    pub gdn_momentum: f64,
    pub gdn_batch: usize,
    pub gdn_epochs: usize,
    pub gdn_decay_epoch: usize,
    pub gdn_decay_factor: f64,
    pub gdn_xent_weight: f64,
    pub gdn_confidence_weight: f64,
    pub gdn_samples_per_scene: usize,

    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau4: f64,
    pub median_window: usize,
    pub sigma_s: f64,
    pub sigma_r: f64,

    pub scene_height: usize,
    pub scene_width: usize,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub noise: f64,
    pub brightness: f64,
    pub objects: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = MatchNetConfig::default();
        let mt = MatcherTrainConfig::default();
        let pp = PostprocessConfig::default();
        let gt = GdnTrainConfig::default();
        let g = GdnConfig::new(64);
        let r = RefinementConfig::default();
        RunConfig {
            mode: net.mode,
            channels: net.in_channels,
            d_max: 64,
            seed: 1,
            features: net.features,
            decision_width: net.decision_width,
            decision_layers: net.decision_layers,
            normalize: net.normalize,
            xent_as_printed: net.xent_as_printed,
            alpha: mt.alpha,
            margin: mt.margin,
            matcher_lr: mt.lr,
            matcher_momentum: mt.momentum,
            matcher_batch: mt.batch_size,
            matcher_epochs: mt.epochs,
            neg_low: 2.0,
            neg_high: 8.0,
            matcher_samples_per_scene: 2000,
            cbca_tau: pp.cbca.tau,
            cbca_l_max: pp.cbca.l_max,
            sgm_p1: pp.sgm.p1,
            sgm_p2: pp.sgm.p2,
            gdn_channels: g.channels,
            gdn_confidence_width: g.confidence_width,
            gdn_lr: gt.lr,
            gdn_momentum: gt.momentum,
            gdn_batch: gt.batch_size,
            gdn_epochs: gt.epochs,
            gdn_decay_epoch: gt.decay_epoch,
            gdn_decay_factor: gt.decay_factor,
            gdn_xent_weight: gt.xent_weight,
            gdn_confidence_weight: gt.confidence_weight,
            gdn_samples_per_scene: 2000,
            tau1: r.tau1,
            tau2: r.tau2,
            tau3: r.tau3,
            tau4: r.tau4,
            median_window: r.median_window,
            sigma_s: r.sigma_s,
            sigma_r: r.sigma_r,
            scene_height: 48,
            scene_width: 96,
            train_scenes: 8,
            val_scenes: 10,
            noise: 0.01,
            brightness: 0.02,
            objects: 4,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Write the resolved configuration next to a run's outputs.
    pub fn save_snapshot(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::create_dir_all(dir.as_ref())?;
        fs::write(dir.as_ref().join("resolved-config.toml"), self.to_toml())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.channels != 1 && self.channels != 3 {
            return bad("channels must be 1 or 3");
        }
        if self.d_max < 2 {
            return bad("d_max must be at least 2");
        }
        if self.sgm_p2 < self.sgm_p1 {
            return bad("sgm_p2 must not be below sgm_p1");
        }
        if !(0.0..=1.0).contains(&self.tau2) || self.tau1 < 0.0 || self.tau4 < 0.0 {
            return bad("need tau2 in [0, 1] and tau1, tau4 >= 0");
        }
        if self.matcher_batch == 0 || self.gdn_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if self.neg_low <= 0.0 || self.neg_high < self.neg_low {
            return bad("need 0 < neg_low <= neg_high");
        }
        Ok(())
    }

    pub fn matchnet(&self) -> MatchNetConfig {
        MatchNetConfig {
            mode: self.mode,
            in_channels: self.channels,
            features: self.features,
            decision_width: self.decision_width,
            decision_layers: self.decision_layers,
            normalize: self.normalize,
            xent_as_printed: self.xent_as_printed,
        }
    }

    pub fn matcher_training(&self) -> MatcherTrainConfig {
        MatcherTrainConfig {
            alpha: self.alpha,
            margin: self.margin,
            lr: self.matcher_lr,
            momentum: self.matcher_momentum,
            batch_size: self.matcher_batch,
            epochs: self.matcher_epochs,
            seed: self.seed,
        }
    }

    pub fn postprocess(&self) -> PostprocessConfig {
        PostprocessConfig {
            cbca: CbcaParams {
                tau: self.cbca_tau,
                l_max: self.cbca_l_max,
            },
            sgm: SgmParams {
                p1: self.sgm_p1,
                p2: self.sgm_p2,
            },
        }
    }

    pub fn gdn(&self) -> GdnConfig {
        GdnConfig {
            d_max: self.d_max,
            channels: self.gdn_channels,
            confidence_width: self.gdn_confidence_width,
        }
    }

    pub fn gdn_training(&self) -> GdnTrainConfig {
        GdnTrainConfig {
            lr: self.gdn_lr,
            momentum: self.gdn_momentum,
            batch_size: self.gdn_batch,
            epochs: self.gdn_epochs,
            decay_epoch: self.gdn_decay_epoch,
            decay_factor: self.gdn_decay_factor,
            xent_weight: self.gdn_xent_weight,
            confidence_weight: self.gdn_confidence_weight,
            seed: self.seed,
        }
    }

    pub fn refinement(&self) -> RefinementConfig {
        RefinementConfig {
            tau1: self.tau1,
            tau2: self.tau2,
            tau3: self.tau3,
            tau4: self.tau4,
            median_window: self.median_window,
            sigma_s: self.sigma_s,
            sigma_r: self.sigma_r,
        }
    }

    /// Layered scene `index` of the training (`validation = false`) or
    /// validation split. The splits use disjoint seed ranges.
    pub fn scene(&self, index: usize, validation: bool) -> SceneSpec {
        let base = self.seed.wrapping_mul(1_000_003);
        let offset = if validation { 500_000 } else { 0 };
        SceneSpec {
            height: self.scene_height,
            width: self.scene_width,
            d_max: self.d_max,
            channels: self.channels,
            seed: base.wrapping_add(offset + index as u64),
            kind: SceneKind::Layered { objects: self.objects },
            noise: self.noise,
            brightness: self.brightness,
        }
    }
}
