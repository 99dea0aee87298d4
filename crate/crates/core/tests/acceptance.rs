//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always appear in the test output.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gradcheck, oracle};
use resmatch::confidence::{self, auc_sparsification, Measure};
use resmatch::costproc::{sgm, CostVolume, SgmParams};
use resmatch::dataio::RunConfig;
use resmatch::gdn::{self, reflective_label, smooth_weight, weighted_xent_loss, DisparityPatch, Gdn, GdnConfig};
use resmatch::maps::{ConfidenceMap, DisparityMap};
use resmatch::matchnet::{hybrid_loss, MatchNet, MatchNetConfig, Mode, SkipMode};
use resmatch::nncore::{Tape, Tensor};
use resmatch::pipeline::{self, Pipeline, MEASURES};
use resmatch::refine::{self, label_pixels, PixelLabel, PixelLabelMap, RefinementConfig};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn small_net(mode: Mode, seed: u64) -> MatchNet {
    MatchNet::new(
        MatchNetConfig {
            mode,
            features: 4,
            decision_width: 8,
            decision_layers: 2,
            ..Default::default()
        },
        seed,
    )
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (name, check) in gradcheck::layer_kinds() {
        let e = gradcheck::worst_over_trials(check);
        ensure(e < gradcheck::TOLERANCE, format!("{name}: relative error {e:e}"))?;
        worst = worst.max(e);
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} layer kinds x {} trials, worst relative error {worst:.1e} (< 1e-4), {secs:.2} s",
        gradcheck::layer_kinds().len(),
        gradcheck::TRIALS
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let mut net = small_net(Mode::Accurate, trial);
        let block = net.outer_blocks()[0].1.clone();
        for id in [block.lambda0, block.inner1.lambda, block.inner2.lambda] {
            net.params.get_mut(id).value.data_mut()[0] = rng.gen_range(-1.5..1.5);
        }
        let [l0, l1, l2] = block.lambdas(&net.params);
        let y0 = random_tensor(&mut rng, &[4, 1, 5, 5]);

        let mut tape = Tape::inference(&net.params);
        let x = tape.input(y0.clone());
        let rec = block
            .forward(&mut tape, x, SkipMode::Highway)
            .map_err(|e| e.to_string())?;
        let recursive = tape.value(rec).data().to_vec();

        // (λ0 + λ2·λ1)·y0 + λ2·f1(y0) + f2(λ1·y0 + f1(y0))
        let mut tape = Tape::inference(&net.params);
        let x = tape.input(y0.clone());
        let f1 = block.inner1.residual(&mut tape, x).map_err(|e| e.to_string())?;
        let f1 = tape.value(f1).data().to_vec();
        let inner: Vec<f64> = y0.data().iter().zip(&f1).map(|(y, f)| l1 * y + f).collect();
        let xi = tape.input(Tensor::new(y0.shape().to_vec(), inner).unwrap());
        let f2 = block.inner2.residual(&mut tape, xi).map_err(|e| e.to_string())?;
        let f2 = tape.value(f2).data();
        for i in 0..f2.len() {
            let unrolled = (l0 + l2 * l1) * y0.data()[i] + l2 * f1[i] + f2[i];
            worst = worst.max((unrolled - recursive[i]).abs());
        }
    }
    ensure(
        worst < 1e-9,
        format!("unrolled and recursive forms differ by {worst:e}"),
    )?;

    for trial in 0..100 {
        let mode = if trial % 2 == 0 { Mode::Fast } else { Mode::Accurate };
        let net = small_net(mode, 1000 + trial);
        let rf = net.receptive_field();
        let img = random_tensor(&mut rng, &[1, rf + 3, rf + 4]);
        let gated = net.describe_with(&img, SkipMode::Highway).map_err(|e| e.to_string())?;
        let plain = net.describe_with(&img, SkipMode::Identity).map_err(|e| e.to_string())?;
        let same = gated
            .data()
            .iter()
            .zip(plain.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, format!("trial {trial}: λ = 1 differs from plain residual"))?;
    }
    Ok(format!(
        "max |recursive - unrolled| {worst:.1e} over 100 inputs; λ = 1 bit-identical to plain residual on 100 inputs"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut report = Vec::new();
    for mode in [Mode::Accurate, Mode::Fast] {
        let net = small_net(mode, 33);
        let rf = net.receptive_field();
        let r = rf / 2;
        let side = 25;
        let (cy, cx) = (12, 12);
        let img = random_tensor(&mut rng, &[1, side, side]);
        let center = |t: &Tensor| -> Vec<f64> {
            let o = side - rf + 1;
            (0..4).map(|f| t.data()[f * o * o + (cy - r) * o + (cx - r)]).collect()
        };
        let base = center(&net.describe_windows(&img).map_err(|e| e.to_string())?);
        let inside = |y: usize, x: usize| y.abs_diff(cy) <= r && x.abs_diff(cx) <= r;
        let mut outside = img.clone();
        for y in 0..side {
            for x in 0..side {
                if !inside(y, x) {
                    outside.data_mut()[y * side + x] = rng.gen_range(-5.0..5.0);
                }
            }
        }
        let after = center(&net.describe_windows(&outside).map_err(|e| e.to_string())?);
        ensure(
            base.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()),
            format!("{rf}x{rf}: outside perturbation changed the central descriptor"),
        )?;
        let mut edge = img.clone();
        edge.data_mut()[(cy - r) * side + cx + r] += 3.0;
        let moved = center(&net.describe_windows(&edge).map_err(|e| e.to_string())?);
        ensure(
            moved != base,
            format!("{rf}x{rf}: window corner does not reach the center"),
        )?;
        report.push(format!("{rf}x{rf} ({})", mode.name()));
    }
    Ok(format!(
        "central descriptor bit-identical under perturbation outside {}; window corners do reach it",
        report.join(" and ")
    ))
}

fn criterion_4() -> Outcome {
    let cfg = RunConfig::default();
    ensure(cfg.alpha == 0.8 && cfg.margin == 0.2, "hybrid loss defaults")?;
    ensure(
        cfg.gdn_xent_weight == 0.85 && cfg.gdn_confidence_weight == 0.15,
        "GDN loss weight defaults",
    )?;
    let sched = cfg.gdn_training().schedule();
    ensure(
        sched.lr(11) == 0.003 && (sched.lr(12) - 0.0003).abs() < 1e-18,
        "lr schedule",
    )?;
    ensure(
        cfg.gdn_epochs == 15 && cfg.gdn_batch == 128 && cfg.gdn_momentum == 0.9,
        "GDN training",
    )?;

    let m = cfg.margin;
    let h = hybrid_loss(0.3, 0.6, 0.9, 0.7, cfg.alpha, m, true).map_err(|e| e.to_string())?;
    let xent = -(0.6f64.ln() + 0.7f64.ln());
    ensure(
        h.hinge == 0.0 && (h.loss - 0.8 * xent).abs() < 1e-15,
        "hinge beyond margin",
    )?;
    let h = hybrid_loss(0.3, 0.6, 0.5, 0.5, cfg.alpha, m, true).map_err(|e| e.to_string())?;
    ensure(
        (h.hinge - 0.2).abs() < 1e-15 && (h.loss - (0.8 * xent + 0.2 * 0.2)).abs() < 1e-15,
        "hinge at equal similarity",
    )?;
    let h = hybrid_loss(0.3, 0.6, 0.5, 0.5, 1.0, m, true).map_err(|e| e.to_string())?;
    ensure(h.loss == h.xent, "α = 1 is pure cross-entropy")?;

    let w: Vec<f64> = (0..12).map(|i| smooth_weight(i, 5.0)).collect();
    let want = [0.0, 0.0, 0.1, 0.25, 0.65, 0.65, 0.65, 0.25, 0.1, 0.0, 0.0, 0.0];
    ensure(w == want, format!("bins for y = 5: {w:?}"))?;
    let nz: Vec<usize> = (0..12).filter(|&i| smooth_weight(i, 5.5) > 0.0).collect();
    ensure(
        nz == (3..=8).collect::<Vec<_>>(),
        format!("support for y = 5.5: {nz:?}"),
    )?;
    let l = weighted_xent_loss(&[0.0; 8], 4.0).map_err(|e| e.to_string())?;
    ensure((l - 2.65 * 8f64.ln()).abs() < 1e-12, format!("uniform loss {l}"))?;
    Ok("α 0.8, m 0.2, weights 0.85/0.15, bins 0.65/0.25/0.1, lr 0.003 -> 0.0003 at epoch 12 match closed forms".into())
}

/// Noise with one strongly negative channel at the label.
fn toy_patches(n: usize, d: usize, seed: u64) -> Vec<DisparityPatch> {
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

fn criterion_5() -> Outcome {
    let cfg = GdnConfig {
        d_max: 5,
        channels: 8,
        confidence_width: 8,
    };
    let mut g = Gdn::new(cfg, 4);
    for p in g.params.iter_mut() {
        p.value.data_mut().fill(0.0);
    }
    let patch = Tensor::zeros(&[5, 9, 9]);
    let bias = g.fc3.bias;
    g.params.get_mut(bias).value.data_mut()[2] = 1.0;
    let before = reflective_label(&g.forward(&patch).map_err(|e| e.to_string())?.scores, 2.0);
    g.params.get_mut(bias).value.data_mut()[4] = 2.0;
    let after = reflective_label(&g.forward(&patch).map_err(|e| e.to_string())?.scores, 2.0);
    ensure((before, after) == (1, 0), format!("labels {before} -> {after}"))?;

    let train = toy_patches(1500, 6, 1);
    let tc = gdn::GdnTrainConfig {
        epochs: 15,
        batch_size: 32,
        lr: 0.1,
        ..Default::default()
    };
    let net = Gdn::new(
        GdnConfig {
            d_max: 6,
            channels: 8,
            confidence_width: 8,
        },
        3,
    );
    let out = gdn::gdn_train(net, &train, &tc).map_err(|e| e.to_string())?;
    ensure(out.log.len() == 15, "one log record per epoch")?;
    let last = out.log.last().unwrap();
    let gap = (last.positive_fraction - last.train_accuracy).abs();
    ensure(
        gap <= 0.05,
        format!(
            "positive fraction {:.3} vs accuracy {:.3}",
            last.positive_fraction, last.train_accuracy
        ),
    )?;
    Ok(format!(
        "label flips 1 -> 0 under an FC3 bias change (y = 2); toy run: positive fraction {:.3} -> {:.3}, train accuracy {:.3} (gap {gap:.3} <= 0.05)",
        out.log[0].positive_fraction, last.positive_fraction, last.train_accuracy
    ))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn maps_from(
    pred: &[f64],
    gt: &[f64],
    conf: &[f64],
    h: usize,
    w: usize,
) -> (ConfidenceMap, DisparityMap, DisparityMap) {
    (
        ConfidenceMap::new(h, w, conf.to_vec()).unwrap(),
        DisparityMap::from_values(h, w, pred.to_vec()).unwrap(),
        DisparityMap::from_values(h, w, gt.to_vec()).unwrap(),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let e = |x: resmatch::Result<f64>| x.map_err(|e| e.to_string());
        let checks = [
            ("msm", e(confidence::msm(&c))?, oracle::msm(&c)),
            ("prob", confidence::prob(&s), oracle::prob(&s)),
            ("cur", e(confidence::cur(&c))?, oracle::cur(&c)),
            ("pkrn", e(confidence::pkrn(&c))?, oracle::pkrn(&c)),
            ("nem", e(confidence::nem(&c))?, oracle::nem(&c)),
            ("lrd", e(confidence::lrd(&c, &r))?, oracle::lrd(&c, &r)),
        ];
        for (name, got, want) in checks {
            ensure(close(got, want), format!("curve {i}: {name} {got} vs {want}"))?;
        }
    }

    let n = 7;
    let perms = permutations(n);
    let mut orderings = 0;
    for m in 0..20 {
        let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..20.0)).collect();
        let pred: Vec<f64> = gt
            .iter()
            .map(|g| {
                if rng.gen_bool(0.5) {
                    *g
                } else {
                    g + rng.gen_range(4.0..10.0)
                }
            })
            .collect();
        let oracle_conf: Vec<f64> = pred
            .iter()
            .zip(&gt)
            .map(|(p, g)| ((p - g).abs() <= 3.0) as u8 as f64)
            .collect();
        let (c, d, g) = maps_from(&pred, &gt, &oracle_conf, 1, n);
        let best = auc_sparsification(&c, &d, &g, 3.0).map_err(|e| e.to_string())?;
        for p in &perms {
            let conf: Vec<f64> = p.iter().map(|&k| k as f64).collect();
            let (c, d, g) = maps_from(&pred, &gt, &conf, 1, n);
            let a = auc_sparsification(&c, &d, &g, 3.0).map_err(|e| e.to_string())?;
            ensure(
                best >= a - 1e-15,
                format!("map {m}: ordering beats the oracle ({a} > {best})"),
            )?;
            orderings += 1;
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (h, w) = (12, 12);
        let gt: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..20.0)).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g + rng.gen_range(-6.0..6.0)).collect();
        let conf: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (c, d, g) = maps_from(&pred, &gt, &conf, h, w);
        let base = auc_sparsification(&c, &d, &g, 3.0).map_err(|e| e.to_string())?;
        for f in [
            |v: f64| 3.0 * v - 7.0,
            |v: f64| v.exp(),
            |v: f64| v.powi(3),
            |v: f64| (4.0 * v).atan(),
        ] {
            let t: Vec<f64> = conf.iter().map(|v| f(*v)).collect();
            let (c, d, g) = maps_from(&pred, &gt, &t, h, w);
            let a = auc_sparsification(&c, &d, &g, 3.0).map_err(|e| e.to_string())?;
            worst = worst.max((a - base).abs());
        }
    }
    ensure(worst < 1e-12, format!("monotone transform moved AUC by {worst:e}"))?;
    Ok(format!(
        "6 measures match direct formulas to 1e-12 on 1000 curves; oracle >= all {orderings} orderings of 20 maps; monotone transforms move AUC by {worst:.1e}"
    ))
}

struct LabelCase {
    name: &'static str,
    x: usize,
    d_left: f64,
    /// `(x, value)` entries of the right disparity row; all else 0.
    d_right: &'static [(usize, f64)],
    c_left: f64,
    c_right: f64,
    cfg: RefinementConfig,
    want: PixelLabel,
}

fn label_case(case: &LabelCase) -> PixelLabel {
    let w = 16;
    let d_max = 8;
    let mut dl = DisparityMap::filled(1, w, 0.0);
    dl.data[case.x] = case.d_left;
    let mut dr = DisparityMap::filled(1, w, 50.0);
    for &(x, v) in case.d_right {
        dr.data[x] = v;
    }
    let mut cl = vec![0.0; w];
    cl[case.x] = case.c_left;
    let cr = vec![case.c_right; w];
    let labels = label_pixels(
        &dl,
        &dr,
        &ConfidenceMap::new(1, w, cl).unwrap(),
        &ConfidenceMap::new(1, w, cr).unwrap(),
        d_max,
        &case.cfg,
    )
    .unwrap();
    labels.at(0, case.x)
}

fn criterion_7() -> Outcome {
    use PixelLabel::*;
    let def = RefinementConfig::default();
    let wide = RefinementConfig { tau4: 2.0, ..def };
    let cases = [
        LabelCase {
            name: "exact left-right agreement",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 4.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "disagreement exactly tau1",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 5.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "agreement wins over mismatch clause",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 4.0), (10, 2.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "fractional disparity rounds to partner",
            x: 12,
            d_left: 4.4,
            d_right: &[(8, 5.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "confidence override",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0)],
            c_left: 0.9,
            c_right: 0.7,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "override at tau2 boundary",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0)],
            c_left: 0.7,
            c_right: 0.5,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "confidence below tau2",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0), (10, 2.0)],
            c_left: 0.69,
            c_right: 0.0,
            cfg: def,
            want: Mismatch,
        },
        LabelCase {
            name: "margin below tau3",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0), (10, 2.0)],
            c_left: 0.9,
            c_right: 0.85,
            cfg: def,
            want: Mismatch,
        },
        LabelCase {
            name: "override wins over mismatch clause",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0), (10, 2.0)],
            c_left: 0.95,
            c_right: 0.1,
            cfg: def,
            want: Correct,
        },
        LabelCase {
            name: "alternative at distance tau4",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0), (9, 2.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Mismatch,
        },
        LabelCase {
            name: "alternative beyond tau4",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0), (9, 1.5)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Occlusion,
        },
        LabelCase {
            name: "no consistent alternative",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 9.0)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: def,
            want: Occlusion,
        },
        LabelCase {
            name: "own disparity is not an alternative",
            x: 12,
            d_left: 4.0,
            d_right: &[(8, 5.5)],
            c_left: 0.0,
            c_right: 0.0,
            cfg: wide,
            want: Occlusion,
        },
        LabelCase {
            name: "partner outside image blocks override",
            x: 2,
            d_left: 5.0,
            d_right: &[(1, 1.0)],
            c_left: 0.95,
            c_right: 0.0,
            cfg: def,
            want: Mismatch,
        },
        LabelCase {
            name: "partner outside image, no alternative",
            x: 2,
            d_left: 5.0,
            d_right: &[],
            c_left: 0.95,
            c_right: 0.0,
            cfg: def,
            want: Occlusion,
        },
    ];
    for c in &cases {
        let got = label_case(c);
        ensure(got == c.want, format!("{}: got {got:?}, want {:?}", c.name, c.want))?;
    }

    // Mismatch at the center of a 5x5 map. Rays at k·22.5° first land on
    // right (3 rays), down (3), left (3), up (3) and one ray per diagonal.
    let mut d = DisparityMap::filled(5, 5, 0.0);
    let mut set = |x: usize, y: usize, v: f64| d.data[y * 5 + x] = v;
    set(3, 2, 10.0);
    set(2, 3, 20.0);
    set(1, 2, 30.0);
    set(2, 1, 40.0);
    set(3, 3, 5.0);
    set(1, 3, 25.0);
    set(1, 1, 35.0);
    set(3, 1, 45.0);
    set(2, 2, 99.0);
    let mut labels = PixelLabelMap {
        height: 5,
        width: 5,
        labels: vec![Correct; 25],
    };
    labels.labels[12] = Mismatch;
    let out = refine::interpolate(&d, &labels).map_err(|e| e.to_string())?;
    // sorted: 5 10 10 10 20 20 20 25 | 30 30 30 35 40 40 40 45
    ensure(out.at(2, 2) == 27.5, format!("mismatch fill {}", out.at(2, 2)))?;
    ensure(
        out.data
            .iter()
            .zip(&d.data)
            .enumerate()
            .all(|(i, (a, b))| i == 12 || a == b),
        "correct pixels moved",
    )?;

    let d = DisparityMap::from_values(1, 6, vec![3.0, 7.0, 0.0, 0.0, 9.0, 1.0]).unwrap();
    let labels = PixelLabelMap {
        height: 1,
        width: 6,
        labels: vec![Occlusion, Correct, Occlusion, Occlusion, Correct, Occlusion],
    };
    let out = refine::interpolate(&d, &labels).map_err(|e| e.to_string())?;
    ensure(
        out.data == [7.0, 7.0, 7.0, 7.0, 9.0, 9.0],
        format!("occlusion fill {:?}", out.data),
    )?;
    Ok(format!(
        "{} labeling cases match; mismatch median 27.5 and occlusion fills [7 7 7 7 9 9] match hand values",
        cases.len()
    ))
}

fn chain_config() -> Result<RunConfig, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
    ensure(
        cfg.d_max == 32 && cfg.val_scenes >= 10,
        "desk config must use d_max 32 and >= 10 scenes",
    )?;
    Ok(cfg)
}

struct ChainResult {
    errors: [f64; 4],
    aucs: Vec<(Measure, f64)>,
    secs: f64,
}

fn run_chain() -> Result<ChainResult, String> {
    let t = Instant::now();
    let cfg = chain_config()?;
    let e = |x: resmatch::Error| x.to_string();
    let train = pipeline::generate_scenes(&cfg, false).map_err(e)?;
    let val = pipeline::generate_scenes(&cfg, true).map_err(e)?;
    let matcher = pipeline::train_matcher_on_scenes(&cfg, &train).map_err(e)?.net;
    let gdn = pipeline::train_gdn_on_scenes(&cfg, &matcher, &train).map_err(e)?.net;
    let pipe = Pipeline::new(matcher, Some(gdn), &cfg);
    let mut errors = [0.0; 4];
    let mut aucs: Vec<(Measure, f64)> = MEASURES.iter().map(|m| (*m, 0.0)).collect();
    for (i, s) in val.iter().enumerate() {
        let ev = pipeline::evaluate_scene(&pipe, s, i as u64).map_err(e)?;
        for (k, v) in [ev.raw_wta, ev.post_wta, ev.gdn, ev.refined].into_iter().enumerate() {
            errors[k] += v / val.len() as f64;
        }
        for (slot, (m, a)) in aucs.iter_mut().zip(&ev.auc) {
            assert_eq!(slot.0, *m);
            slot.1 += a / val.len() as f64;
        }
    }
    Ok(ChainResult {
        errors,
        aucs,
        secs: t.elapsed().as_secs_f64(),
    })
}

fn criterion_8(chain: &Result<ChainResult, String>) -> Outcome {
    let c = chain.as_ref().map_err(|e| e.clone())?;
    let [raw, post, gdn, refined] = c.errors;
    let line = format!(
        "3-px error raw {raw:.4} > post {post:.4} > gdn {gdn:.4} > refined {refined:.4}, {:.0} s (< 600 s)",
        c.secs
    );
    ensure(
        raw > post && post > gdn && gdn > refined,
        format!("not strictly decreasing: {line}"),
    )?;
    ensure(c.secs < 600.0, format!("too slow: {line}"))?;
    Ok(line)
}

fn criterion_9(chain: &Result<ChainResult, String>) -> Outcome {
    let c = chain.as_ref().map_err(|e| e.clone())?;
    let auc = |m: Measure| c.aucs.iter().find(|(k, _)| *k == m).unwrap().1;
    let refl = auc(Measure::Reflective);
    let table: Vec<String> = c.aucs.iter().map(|(m, a)| format!("{m} {a:.4}")).collect();
    let line = table.join(", ");
    for m in Measure::BASELINES {
        ensure(refl >= auc(m) - 0.02, format!("reflective below {m} - 0.02: {line}"))?;
    }
    ensure(
        refl > auc(Measure::Random),
        format!("reflective not above random: {line}"),
    )?;
    Ok(line)
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let off = refine::subpixel_offset(2.0, 0.0, 1.0).ok_or("no offset for (2, 0, 1)")?;
    ensure((off - 1.0 / 6.0).abs() < 1e-12, format!("(2, 0, 1) -> {off}"))?;
    ensure(
        refine::subpixel_offset(1.0, 0.0, 1.0) == Some(0.0),
        "symmetric neighbors",
    )?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c0 = rng.gen_range(-1.0..1.0);
        let (cm, cp) = (c0 + rng.gen_range(0.01..2.0), c0 + rng.gen_range(0.01..2.0));
        let d = rng.gen_range(1..30) as f64;
        let want = d - (cp - cm) / (2.0 * (cp - 2.0 * c0 + cm));
        let got = d + refine::subpixel_offset(cm, c0, cp).ok_or("convex triple rejected")?;
        worst = worst.max((got - want).abs());
    }
    ensure(worst < 1e-12, format!("parabola vertex off by {worst:e}"))?;
    let vol = CostVolume::from_fn(1, 1, 5, |_, _, d| [0.8, 2.0, 0.0, 1.0, 0.9][d]);
    let sub = refine::subpixel(&DisparityMap::filled(1, 1, 2.0), &vol).map_err(|e| e.to_string())?;
    ensure(
        (sub.at(0, 0) - (2.0 + 1.0 / 6.0)).abs() < 1e-12,
        format!("volume subpixel {}", sub.at(0, 0)),
    )?;

    // 1x4, D = 2, P1 = 1, P2 = 2. Horizontal passes unrolled by hand; the
    // vertical passes see one row and return the costs themselves.
    let c = [[0.0, 2.0], [3.0, 0.0], [1.0, 1.0], [0.0, 4.0]];
    let lr = [[0.0, 2.0], [3.0, 1.0], [2.0, 1.0], [1.0, 4.0]];
    let rl = [[1.0, 2.0], [3.0, 1.0], [1.0, 2.0], [0.0, 4.0]];
    let table = [[0.25, 2.0], [3.0, 0.5], [1.25, 1.25], [0.25, 4.0]];
    for x in 0..4 {
        for d in 0..2 {
            let hand = (lr[x][d] + rl[x][d] + 2.0 * c[x][d]) / 4.0;
            ensure(hand == table[x][d], format!("hand table x={x} d={d}"))?;
        }
    }
    let v = CostVolume::from_fn(1, 4, 2, |_, x, d| c[x][d]);
    let out = sgm(&v, &SgmParams { p1: 1.0, p2: 2.0 }).map_err(|e| e.to_string())?;
    for x in 0..4 {
        for d in 0..2 {
            ensure(
                out.at(0, x, d) == table[x][d],
                format!("SGM x={x} d={d}: {} vs {}", out.at(0, x, d), table[x][d]),
            )?;
        }
    }
    Ok(format!(
        "parabola vertex within {worst:.1e} of analytic on 1000 triples, (2, 0, 1) -> +1/6; SGM 1x4 table exact"
    ))
}

fn main() {
    let quick = std::env::var_os("RESMATCH_SKIP_CHAIN").is_some();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient suite", criterion_1()),
        (2, "outer-block unrolling", criterion_2()),
        (3, "receptive-field locality", criterion_3()),
        (4, "loss constants", criterion_4()),
        (5, "reflective-label dynamics", criterion_5()),
        (6, "confidence measures and AUC", criterion_6()),
        (7, "refinement rules", criterion_7()),
    ];
    if quick {
        results.push((8, "error chain", Err("skipped (RESMATCH_SKIP_CHAIN set)".into())));
        results.push((9, "confidence AUC", Err("skipped (RESMATCH_SKIP_CHAIN set)".into())));
    } else {
        let chain = run_chain();
        results.push((8, "error chain", criterion_8(&chain)));
        results.push((9, "confidence AUC", criterion_9(&chain)));
    }
    results.push((10, "subpixel and SGM oracles", criterion_10()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
