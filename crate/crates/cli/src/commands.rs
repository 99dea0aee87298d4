use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use resmatch::confidence::{confidence_map, shift_nonnegative, sparsification_curve, MeasureInputs};
use resmatch::dataio::{
    generate_scene, read_disparity, read_disparity_png, read_image, write_confidence_png, write_disparity_png,
    write_gray, write_scene, RunConfig, SyntheticScene,
};
use resmatch::gdn::Gdn;
use resmatch::maps::{error_counts, DisparityMap};
use resmatch::matchnet::{lambda_report, MatchNet};
use resmatch::nncore::Checkpoint;
use resmatch::pipeline::{
    confidence_aucs, generate_scenes, train_gdn_on_scenes, train_matcher_on_scenes, Pipeline, Stage, MEASURES,
};
use resmatch::{Error, Result};

use crate::data::{config, csv_error, load_scenes, opt_config, parent_dir};
use crate::{OptRunArgs, RunArgs, Split};

fn training_scenes(cfg: &RunConfig, data: Option<&Path>) -> Result<Vec<SyntheticScene>> {
    match data {
        Some(d) => Ok(load_scenes(d)?.into_iter().map(|(_, s)| s).collect()),
        None => generate_scenes(cfg, false),
    }
}

fn load_matcher(path: &Path) -> Result<MatchNet> {
    MatchNet::from_checkpoint(&Checkpoint::load(path)?)
}

fn load_gdn(path: &Path) -> Result<Gdn> {
    Gdn::from_checkpoint(&Checkpoint::load(path)?)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain records serialize")
}

pub fn generate(run: &RunArgs, out: &Path, split: Split, count: Option<usize>) -> Result<()> {
    let cfg = config(run)?;
    let val = split == Split::Val;
    let n = count.unwrap_or(if val { cfg.val_scenes } else { cfg.train_scenes });
    let prefix = if val { "val" } else { "train" };
    fs::create_dir_all(out)?;
    cfg.save_snapshot(out)?;
    for i in 0..n {
        let scene = generate_scene(&cfg.scene(i, val))?;
        write_scene(out.join(format!("{prefix}_{i:03}")), &scene)?;
    }
    println!("wrote {n} {prefix} scenes to {}", out.display());
    Ok(())
}

pub fn train_matcher_cmd(run: &RunArgs, out: &Path, data: Option<&Path>) -> Result<()> {
    let cfg = config(run)?;
    fs::create_dir_all(out)?;
    cfg.save_snapshot(out)?;
    let scenes = training_scenes(&cfg, data)?;
    let trained = train_matcher_on_scenes(&cfg, &scenes)?;
    trained
        .net
        .to_checkpoint(to_json(&trained.log))
        .save(out.join("matcher.ckpt"))?;
    trained.write_log_csv(fs::File::create(out.join("matcher_log.csv"))?)?;
    let last = trained.log.last().map_or(trained.initial_loss, |r| r.loss);
    println!(
        "mode {}, {} outer blocks, initial loss {:.6}, final loss {:.6}",
        trained.net.config.mode.name(),
        trained.net.outer_blocks().len(),
        trained.initial_loss,
        last
    );
    Ok(())
}

pub fn train_gdn_cmd(run: &RunArgs, matcher: &Path, out: &Path, data: Option<&Path>) -> Result<()> {
    let cfg = config(run)?;
    let net = load_matcher(matcher)?;
    fs::create_dir_all(out)?;
    cfg.save_snapshot(out)?;
    let scenes = training_scenes(&cfg, data)?;
    let trained = train_gdn_on_scenes(&cfg, &net, &scenes)?;
    trained
        .net
        .to_checkpoint(to_json(&trained.log))
        .save(out.join("gdn.ckpt"))?;
    trained.write_log_csv(fs::File::create(out.join("gdn_log.csv"))?)?;
    if let Some(r) = trained.log.last() {
        println!(
            "final loss {:.6}, train accuracy {:.4}, positive fraction {:.4}",
            r.loss, r.train_accuracy, r.positive_fraction
        );
    }
    Ok(())
}

pub fn predict(
    run: &RunArgs,
    matcher: &Path,
    gdn: Option<&Path>,
    left: &Path,
    right: &Path,
    out: &Path,
    stage: Stage,
) -> Result<()> {
    let cfg = config(run)?;
    let gdn = match gdn {
        Some(p) => Some(load_gdn(p)?),
        None if stage >= Stage::Gdn => {
            return Err(Error::Config("--gdn is required from the gdn stage on".into()));
        }
        None => None,
    };
    let pipe = Pipeline::new(load_matcher(matcher)?, gdn, &cfg);
    let (l, r) = (read_image(left)?, read_image(right)?);
    let p = pipe.predict(&l, &r, stage)?;
    fs::create_dir_all(out)?;
    cfg.save_snapshot(out)?;
    match stage {
        Stage::Volume => p.raw.save_cvol(out.join("volume.cvol"))?,
        Stage::Postprocess => p
            .post
            .as_ref()
            .expect("postprocessed")
            .volume
            .save_cvol(out.join("post.cvol"))?,
        _ => {}
    }
    write_disparity_png(out.join("disparity.png"), &p.disparity())?;
    if let Some(g) = &p.gdn {
        write_confidence_png(out.join("confidence.png"), &g.confidence)?;
    }
    if let Some(rf) = &p.refined {
        let l = &rf.labels;
        write_gray(out.join("labels.png"), l.height, l.width, &l.to_gray())?;
        let (c, m, o) = l.counts();
        println!("labels: correct {c}, mismatch {m}, occlusion {o}");
    }
    fs::write(out.join("timings.csv"), p.timings.to_csv())?;
    println!("wrote {}", out.display());
    Ok(())
}

/// `(id, ground-truth path)` for every file or pair directory under `dir`.
fn ground_truth_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let p = e?.path();
        let name = |p: &Path| p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if p.is_dir() {
            for f in ["gt.png", "gt.pfm"] {
                if p.join(f).is_file() {
                    out.push((
                        p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                        p.join(f),
                    ));
                    break;
                }
            }
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("png" | "pfm")) {
            out.push((name(&p), p));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Input(format!("no ground truth under {}", dir.display())));
    }
    Ok(out)
}

fn prediction_for(dir: &Path, id: &str) -> Result<DisparityMap> {
    let flat = dir.join(format!("{id}.png"));
    let nested = dir.join(id).join("disparity.png");
    if flat.is_file() {
        read_disparity_png(flat)
    } else if nested.is_file() {
        read_disparity_png(nested)
    } else {
        Err(Error::Input(format!("no prediction for {id} under {}", dir.display())))
    }
}

#[derive(Serialize)]
struct ErrorRow {
    image_id: String,
    threshold: f64,
    bad: usize,
    valid: usize,
    error: f64,
}

pub fn eval(run: &OptRunArgs, pred: &Path, gt: &Path, out: &Path, two_px: bool) -> Result<()> {
    let cfg = opt_config(run)?;
    let threshold = if two_px { 2.0 } else { 3.0 };
    let mut rows = Vec::new();
    let (mut bad_all, mut valid_all) = (0, 0);
    for (id, path) in ground_truth_entries(gt)? {
        let g = read_disparity(&path)?;
        let p = prediction_for(pred, &id)?;
        let (bad, valid) = error_counts(&p, &g, threshold)?;
        if valid == 0 {
            return Err(Error::Input(format!("{id}: ground truth has no valid pixel")));
        }
        bad_all += bad;
        valid_all += valid;
        rows.push(ErrorRow {
            image_id: id,
            threshold,
            bad,
            valid,
            error: bad as f64 / valid as f64,
        });
    }
    rows.push(ErrorRow {
        image_id: "all".into(),
        threshold,
        bad: bad_all,
        valid: valid_all,
        error: bad_all as f64 / valid_all as f64,
    });
    cfg.save_snapshot(parent_dir(out))?;
    let mut w = csv::Writer::from_path(out).map_err(csv_error)?;
    for r in &rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    println!(
        "{}-px error {:.4} over {} images",
        threshold,
        bad_all as f64 / valid_all as f64,
        rows.len() - 1
    );
    Ok(())
}

#[derive(Serialize)]
struct AucRow<'a> {
    image_id: &'a str,
    measure: &'a str,
    auc: f64,
}

pub fn confidence_eval(
    run: &RunArgs,
    matcher: &Path,
    gdn: &Path,
    data: Option<&Path>,
    out: &Path,
    curves: Option<&Path>,
) -> Result<()> {
    let cfg = config(run)?;
    let pipe = Pipeline::new(load_matcher(matcher)?, Some(load_gdn(gdn)?), &cfg);
    let scenes: Vec<(String, SyntheticScene)> = match data {
        Some(d) => load_scenes(d)?,
        None => generate_scenes(&cfg, true)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("val_{i:03}"), s))
            .collect(),
    };
    cfg.save_snapshot(parent_dir(out))?;
    if let Some(c) = curves {
        fs::create_dir_all(c)?;
    }
    let mut w = csv::Writer::from_path(out).map_err(csv_error)?;
    let mut sums = vec![0.0; MEASURES.len()];
    for (i, (id, s)) in scenes.iter().enumerate() {
        let p = pipe.predict(&s.left, &s.right, Stage::Refine)?;
        let seed = cfg.seed.wrapping_add(i as u64);
        let aucs = confidence_aucs(&p, &s.gt, seed, 3.0)?;
        for (k, (m, a)) in aucs.iter().enumerate() {
            sums[k] += a;
            w.serialize(AucRow {
                image_id: id,
                measure: m.name(),
                auc: *a,
            })
            .map_err(csv_error)?;
        }
        if let Some(dir) = curves {
            let post = p.post.as_ref().expect("refine stage");
            let post_r = p.post_right.as_ref().expect("refine stage");
            let g = p.gdn.as_ref().expect("refine stage");
            let (l, r) = shift_nonnegative(&post.raw, Some(&post_r.raw));
            let inputs = MeasureInputs {
                left: &l,
                right: r.as_ref(),
                gdn_prob: Some(&g.prob),
                reflective: Some(&g.confidence),
                seed,
            };
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("{id}.csv")))?);
            writeln!(f, "measure,density,accuracy")?;
            for m in MEASURES {
                for (t, acc) in sparsification_curve(&confidence_map(m, &inputs)?, &g.disparity, &s.gt, 3.0)? {
                    writeln!(f, "{},{t},{acc}", m.name())?;
                }
            }
        }
    }
    w.flush()?;
    println!("{:<12} {:>8}", "measure", "mean AUC");
    for (k, m) in MEASURES.iter().enumerate() {
        println!("{:<12} {:>8.4}", m.name(), sums[k] / scenes.len() as f64);
    }
    Ok(())
}

pub fn bench(run: &RunArgs, matcher: Option<&Path>, gdn: Option<&Path>, runs: usize, out: Option<&Path>) -> Result<()> {
    let cfg = config(run)?;
    if runs == 0 {
        return Err(Error::Config("--runs must be positive".into()));
    }
    let m = match matcher {
        Some(p) => load_matcher(p)?,
        None => MatchNet::new(cfg.matchnet(), cfg.seed),
    };
    let g = match gdn {
        Some(p) => load_gdn(p)?,
        None => Gdn::new(cfg.gdn(), cfg.seed),
    };
    let pipe = Pipeline::new(m, Some(g), &cfg);
    let scene = generate_scene(&cfg.scene(0, true))?;
    let mut csv = String::from("run,component,runtime_s,iterations,total_s\n");
    let mut last = None;
    for r in 0..runs {
        let p = pipe.predict(&scene.left, &scene.right, Stage::Refine)?;
        for line in p.timings.to_csv().lines().skip(1) {
            csv.push_str(&format!("{r},{line}\n"));
        }
        last = Some(p.timings);
    }
    if let Some(o) = out {
        cfg.save_snapshot(parent_dir(o))?;
        fs::write(o, csv)?;
    }
    println!(
        "{} mode, {}x{} image, d_max {}",
        pipe.matcher.config.mode.name(),
        scene.left.width,
        scene.left.height,
        cfg.d_max
    );
    println!("{}", last.expect("runs > 0"));
    Ok(())
}

pub fn lambda_report_cmd(run: &OptRunArgs, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = opt_config(run)?;
    let report = lambda_report(&Checkpoint::load(checkpoint)?)?;
    match out {
        Some(o) => {
            cfg.save_snapshot(parent_dir(o))?;
            fs::write(o, report.to_csv())?;
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}
