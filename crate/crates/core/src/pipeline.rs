//! End-to-end orchestration: training both networks on synthetic scenes,
//! staged prediction with per-component timing and scene evaluation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{auc_sparsification, confidence_map, shift_nonnegative, Measure, MeasureInputs};
use crate::costproc::{postprocess, CostVolume, PostprocessConfig, Postprocessed, Reference};
use crate::dataio::{generate_scene, sample_gdn_patches, sample_match_pairs, RunConfig, SyntheticScene};
use crate::error::{Error, Result};
use crate::gdn::{gdn_train, Gdn, GdnPrediction, TrainedGdn};
use crate::maps::{error_rate, DisparityMap, Image};
use crate::matchnet::{cost_volume_from_descriptors, train_matcher, DescriptorMap, MatchNet, TrainedMatcher};
use crate::par;
use crate::refine::{interpolate, label_pixels, smooth, subpixel, Refined, RefinementConfig};

/// Where prediction stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Volume,
    Postprocess,
    Gdn,
    Refine,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume" => Ok(Stage::Volume),
            "postprocess" => Ok(Stage::Postprocess),
            "gdn" => Ok(Stage::Gdn),
            "refine" => Ok(Stage::Refine),
            _ => Err(Error::Config(format!("unknown stage {s:?}"))),
        }
    }
}

/// Wall time of one pipeline component and how often it ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageTime {
    pub iterations: usize,
    pub total: Duration,
}

impl StageTime {
    pub fn per_iteration(&self) -> Duration {
        if self.iterations == 0 {
            Duration::ZERO
        } else {
            self.total / self.iterations as u32
        }
    }

    fn add(&mut self, iterations: usize, t: Duration) {
        self.iterations += iterations;
        self.total += t;
    }
}

/// Timing rows of a prediction, one per component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageTimings {
    pub description: StageTime,
    pub decision: StageTime,
    pub cbca: StageTime,
    pub sgm: StageTime,
    pub gdn: StageTime,
    pub interpolation: StageTime,
    pub subpixel: StageTime,
    pub smoothing: StageTime,
    pub other: StageTime,
}

pub const STAGE_ROWS: [&str; 9] = [
    "Description sub-network",
    "Decision sub-network",
    "CBCA",
    "SGM",
    "Global disparity network",
    "Outlier interpolation",
    "Sub-pixel enhancement",
    "Smoothing and refinement",
    "Everything else",
];

impl StageTimings {
    pub fn rows(&self) -> [(&'static str, StageTime); 9] {
        let t = [
            self.description,
            self.decision,
            self.cbca,
            self.sgm,
            self.gdn,
            self.interpolation,
            self.subpixel,
            self.smoothing,
            self.other,
        ];
        std::array::from_fn(|i| (STAGE_ROWS[i], t[i]))
    }

    pub fn total(&self) -> Duration {
        self.rows().iter().map(|(_, t)| t.total).sum()
    }

    /// CSV with columns `component,runtime_s,iterations,total_s`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,runtime_s,iterations,total_s\n");
        for (name, t) in self.rows() {
            s.push_str(&format!(
                "{name},{:.6},{},{:.6}\n",
                t.per_iteration().as_secs_f64(),
                t.iterations,
                t.total.as_secs_f64()
            ));
        }
        s
    }
}

impl fmt::Display for StageTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<26} {:>12} {:>10} {:>12}",
            "Component", "Runtime", "Iterations", "Total"
        )?;
        for (name, t) in self.rows() {
            writeln!(
                f,
                "{name:<26} {:>12.6} {:>10} {:>12.6}",
                t.per_iteration().as_secs_f64(),
                t.iterations,
                t.total.as_secs_f64()
            )?;
        }
        write!(
            f,
            "{:<26} {:>12} {:>10} {:>12.6}",
            "Total",
            "",
            "",
            self.total().as_secs_f64()
        )
    }
}

/// Everything a prediction produced up to its final stage. The right-view
/// fields are only filled when refinement runs.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub stage: Stage,
    pub raw: CostVolume,
    pub raw_right: Option<CostVolume>,
    pub post: Option<Postprocessed>,
    pub post_right: Option<Postprocessed>,
    pub gdn: Option<GdnPrediction>,
    pub gdn_right: Option<GdnPrediction>,
    pub refined: Option<Refined>,
    pub timings: StageTimings,
}

impl Prediction {
    /// The disparity map of the last stage that ran.
    pub fn disparity(&self) -> DisparityMap {
        if let Some(r) = &self.refined {
            return r.disparity.clone();
        }
        if let Some(g) = &self.gdn {
            return g.disparity.clone();
        }
        match &self.post {
            Some(p) => p.volume.wta(),
            None => self.raw.wta(),
        }
    }
}

/// Trained networks plus the non-learned stage settings.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub matcher: MatchNet,
    pub gdn: Option<Gdn>,
    pub d_max: usize,
    pub postprocess: PostprocessConfig,
    pub refinement: RefinementConfig,
}

impl Pipeline {
    pub fn new(matcher: MatchNet, gdn: Option<Gdn>, cfg: &RunConfig) -> Self {
        Pipeline {
            matcher,
            gdn,
            d_max: cfg.d_max,
            postprocess: cfg.postprocess(),
            refinement: cfg.refinement(),
        }
    }

    fn gdn_net(&self) -> Result<&Gdn> {
        self.gdn
            .as_ref()
            .ok_or_else(|| Error::State("this stage needs a disparity network checkpoint".into()))
    }

    /// Run the pipeline on a rectified pair up to `stage`.
    pub fn predict(&self, left: &Image, right: &Image, stage: Stage) -> Result<Prediction> {
        if !left.same_extent(right) || left.channels != right.channels {
            return Err(Error::Input("left and right images differ in shape".into()));
        }
        if stage >= Stage::Gdn {
            let g = self.gdn_net()?;
            if g.config.d_max != self.d_max {
                return Err(Error::Config(format!(
                    "disparity network expects d_max {} but the run uses {}",
                    g.config.d_max, self.d_max
                )));
            }
        }
        let start = Instant::now();
        let mut tm = StageTimings::default();
        let both = stage == Stage::Refine;

        let t = Instant::now();
        let dl = DescriptorMap::compute(&self.matcher, left)?;
        let dr = DescriptorMap::compute(&self.matcher, right)?;
        tm.description.add(2, t.elapsed());

        let mut volume = |reference| -> Result<CostVolume> {
            let t = Instant::now();
            let (v, s) = cost_volume_from_descriptors(&self.matcher, &dl, &dr, self.d_max, reference)?;
            tm.decision.add(s.decision_passes, t.elapsed());
            Ok(v)
        };
        let raw = volume(Reference::Left)?;
        let raw_right = if both { Some(volume(Reference::Right)?) } else { None };

        let mut out = Prediction {
            stage,
            raw,
            raw_right,
            post: None,
            post_right: None,
            gdn: None,
            gdn_right: None,
            refined: None,
            timings: tm,
        };
        if stage >= Stage::Postprocess {
            let mode = self.matcher.config.mode;
            let run = |v: &CostVolume, tm: &mut StageTimings| -> Result<Postprocessed> {
                let p = postprocess(v, left, right, mode, &self.postprocess)?;
                tm.cbca.add(p.stats.cbca_iterations, p.stats.cbca_time);
                tm.sgm.add(p.stats.sgm_runs, p.stats.sgm_time);
                Ok(p)
            };
            out.post = Some(run(&out.raw, &mut out.timings)?);
            if let Some(r) = &out.raw_right {
                out.post_right = Some(run(r, &mut out.timings)?);
            }
        }
        if stage >= Stage::Gdn {
            let g = self.gdn_net()?;
            let t = Instant::now();
            out.gdn = Some(g.predict(&out.post.as_ref().expect("postprocessed").volume)?);
            let mut n = 1;
            if let Some(p) = &out.post_right {
                // the network only saw left-reference volumes in training
                let m = g.predict(&p.volume.mirrored())?;
                out.gdn_right = Some(GdnPrediction {
                    disparity: m.disparity.mirrored(),
                    confidence: m.confidence.mirrored(),
                    prob: m.prob.mirrored(),
                });
                n += 1;
            }
            out.timings.gdn.add(n, t.elapsed());
        }
        if stage == Stage::Refine {
            let (gl, gr) = (out.gdn.as_ref().unwrap(), out.gdn_right.as_ref().unwrap());
            let post = &out.post.as_ref().unwrap().volume;
            let cfg = &self.refinement;
            let t = Instant::now();
            let labels = label_pixels(
                &gl.disparity,
                &gr.disparity,
                &gl.confidence,
                &gr.confidence,
                self.d_max,
                cfg,
            )?;
            let interpolated = interpolate(&gl.disparity, &labels)?;
            out.timings.interpolation.add(1, t.elapsed());
            let t = Instant::now();
            let sub = subpixel(&interpolated, post)?;
            out.timings.subpixel.add(1, t.elapsed());
            let t = Instant::now();
            let disparity = smooth(&sub, cfg);
            out.timings.smoothing.add(1, t.elapsed());
            out.refined = Some(Refined {
                labels,
                interpolated,
                subpixel: sub,
                disparity,
            });
        }
        let measured = out.timings.total();
        out.timings.other.add(0, start.elapsed().saturating_sub(measured));
        Ok(out)
    }
}

/// Training or validation scenes of a run, generated in parallel.
pub fn generate_scenes(cfg: &RunConfig, validation: bool) -> Result<Vec<SyntheticScene>> {
    let n = if validation { cfg.val_scenes } else { cfg.train_scenes };
    par::try_map_range(n, |i| generate_scene(&cfg.scene(i, validation)))
}

fn scene_rng(cfg: &RunConfig, salt: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64))
}

/// Sample patch triples from every scene and train a fresh matcher.
pub fn train_matcher_on_scenes(cfg: &RunConfig, scenes: &[SyntheticScene]) -> Result<TrainedMatcher> {
    if scenes.is_empty() {
        return Err(Error::Input("no training scenes".into()));
    }
    let net = MatchNet::new(cfg.matchnet(), cfg.seed);
    let rf = net.receptive_field();
    let per_scene = par::try_map_range(scenes.len(), |i| {
        sample_match_pairs(
            &scenes[i],
            cfg.matcher_samples_per_scene,
            rf,
            (cfg.neg_low, cfg.neg_high),
            &mut scene_rng(cfg, 1, i),
        )
    })?;
    let samples: Vec<_> = per_scene.into_iter().flatten().collect();
    train_matcher(net, &samples, &cfg.matcher_training())
}

/// Build and post-process each scene's volume with the trained matcher,
/// sample `[D, 9, 9]` patches and train a fresh disparity network.
pub fn train_gdn_on_scenes(cfg: &RunConfig, matcher: &MatchNet, scenes: &[SyntheticScene]) -> Result<TrainedGdn> {
    if scenes.is_empty() {
        return Err(Error::Input("no training scenes".into()));
    }
    let stage_only = Pipeline::new(matcher.clone(), None, cfg);
    let mut patches = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let p = stage_only.predict(&s.left, &s.right, Stage::Postprocess)?;
        let vol = &p.post.expect("postprocessed").volume;
        patches.extend(sample_gdn_patches(
            vol,
            &s.gt,
            cfg.gdn_samples_per_scene,
            &mut scene_rng(cfg, 2, i),
        )?);
    }
    gdn_train(Gdn::new(cfg.gdn(), cfg.seed), &patches, &cfg.gdn_training())
}

/// 3-px errors along the chain and confidence AUCs for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEvaluation {
    pub raw_wta: f64,
    pub post_wta: f64,
    pub gdn: f64,
    pub refined: f64,
    /// `(measure, AUC)` for the six baselines, reflective and random.
    pub auc: Vec<(Measure, f64)>,
}

impl SceneEvaluation {
    pub fn auc_of(&self, m: Measure) -> Option<f64> {
        self.auc.iter().find(|(k, _)| *k == m).map(|(_, a)| *a)
    }
}

pub const MEASURES: [Measure; 8] = [
    Measure::Msm,
    Measure::Prob,
    Measure::Cur,
    Measure::Pkrn,
    Measure::Nem,
    Measure::Lrd,
    Measure::Reflective,
    Measure::Random,
];

/// Confidence AUC of every measure against the GDN disparity. Curve
/// measures read the post-processed volumes before `tanh`.
pub fn confidence_aucs(pred: &Prediction, gt: &DisparityMap, seed: u64, threshold: f64) -> Result<Vec<(Measure, f64)>> {
    let state = || Error::State("confidence evaluation needs a full refine-stage prediction".into());
    let (post, post_r) = (
        pred.post.as_ref().ok_or_else(state)?,
        pred.post_right.as_ref().ok_or_else(state)?,
    );
    let g = pred.gdn.as_ref().ok_or_else(state)?;
    let (left, right) = shift_nonnegative(&post.raw, Some(&post_r.raw));
    let inputs = MeasureInputs {
        left: &left,
        right: right.as_ref(),
        gdn_prob: Some(&g.prob),
        reflective: Some(&g.confidence),
        seed,
    };
    MEASURES
        .iter()
        .map(|&m| {
            Ok((
                m,
                auc_sparsification(&confidence_map(m, &inputs)?, &g.disparity, gt, threshold)?,
            ))
        })
        .collect()
}

/// Run the full pipeline on a scene and score every stage.
pub fn evaluate_scene(pipe: &Pipeline, scene: &SyntheticScene, seed: u64) -> Result<SceneEvaluation> {
    let p = pipe.predict(&scene.left, &scene.right, Stage::Refine)?;
    let gt = &scene.gt;
    Ok(SceneEvaluation {
        raw_wta: error_rate(&p.raw.wta(), gt, 3.0)?,
        post_wta: error_rate(&p.post.as_ref().unwrap().volume.wta(), gt, 3.0)?,
        gdn: error_rate(&p.gdn.as_ref().unwrap().disparity, gt, 3.0)?,
        refined: error_rate(&p.refined.as_ref().unwrap().disparity, gt, 3.0)?,
        auc: confidence_aucs(&p, gt, seed, 3.0)?,
    })
}
