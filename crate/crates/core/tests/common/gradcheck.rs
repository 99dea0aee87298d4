//! Central finite-difference checks against the tape's manual backward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resmatch::nncore::{ParamId, ParamSet, Tape, Tensor, Var};
use resmatch::Result;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const TRIALS: u64 = 20;

/// Builds the graph under test from the recorded inputs.
pub type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// One forward/backward problem: parameters, which of them to check, and inputs.
pub struct Problem {
    pub params: ParamSet,
    pub checked: Vec<ParamId>,
    pub inputs: Vec<Tensor>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x6772_6164 ^ seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so a ±H step never crosses a ReLU kink.
pub fn kink_free_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = random_tensor(rng, shape);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
    t
}

fn forward(params: &ParamSet, inputs: &[Tensor], build: Build) -> Vec<f64> {
    let mut tape = Tape::new(params);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    tape.value(out).data().to_vec()
}

fn projected(params: &ParamSet, inputs: &[Tensor], build: Build, seed: &[f64]) -> f64 {
    forward(params, inputs, build)
        .iter()
        .zip(seed)
        .map(|(a, b)| a * b)
        .sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Largest relative error between analytic and numeric gradients of
/// `Σ r·out` with respect to every input element and checked parameter.
pub fn max_rel_error(mut p: Problem, build: Build, rng: &mut ChaCha8Rng) -> f64 {
    let out_len = forward(&p.params, &p.inputs, build).len();
    let seed: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (input_grads, param_grads) = {
        let mut tape = Tape::new(&p.params);
        let vars: Vec<Var> = p.inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        let g = tape.backward_seeded(&[(out, seed.clone())]).unwrap();
        let ig: Vec<Vec<f64>> = vars
            .iter()
            .zip(&p.inputs)
            .map(|(v, t)| g.var(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
            .collect();
        let pg: Vec<Vec<f64>> = p
            .checked
            .iter()
            .map(|id| g.param(*id).expect("participating param has a gradient").to_vec())
            .collect();
        (ig, pg)
    };

    let mut worst = 0.0f64;
    for i in 0..p.inputs.len() {
        for k in 0..p.inputs[i].len() {
            let orig = p.inputs[i].data()[k];
            p.inputs[i].data_mut()[k] = orig + H;
            let up = projected(&p.params, &p.inputs, build, &seed);
            p.inputs[i].data_mut()[k] = orig - H;
            let down = projected(&p.params, &p.inputs, build, &seed);
            p.inputs[i].data_mut()[k] = orig;
            worst = worst.max(rel_err(input_grads[i][k], (up - down) / (2.0 * H)));
        }
    }
    for (j, id) in p.checked.clone().into_iter().enumerate() {
        for k in 0..p.params.value(id).len() {
            let orig = p.params.value(id).data()[k];
            p.params.get_mut(id).value.data_mut()[k] = orig + H;
            let up = projected(&p.params, &p.inputs, build, &seed);
            p.params.get_mut(id).value.data_mut()[k] = orig - H;
            let down = projected(&p.params, &p.inputs, build, &seed);
            p.params.get_mut(id).value.data_mut()[k] = orig;
            worst = worst.max(rel_err(param_grads[j][k], (up - down) / (2.0 * H)));
        }
    }
    worst
}

pub fn set_scalar(params: &mut ParamSet, id: ParamId, v: f64) {
    params.get_mut(id).value.data_mut()[0] = v;
}

/// Per-layer problems; each returns the worst error over [`TRIALS`] seeds.
pub fn layer_kinds() -> Vec<(&'static str, fn(u64) -> f64)> {
    vec![
        ("conv2d", check_conv),
        ("fully-connected", check_linear),
        ("relu", check_relu),
        ("tanh", check_tanh),
        ("log-softmax", check_log_softmax),
        ("sigmoid", check_sigmoid),
        ("highway_add", check_highway),
        ("small net", check_net),
    ]
}

pub fn worst_over_trials(f: fn(u64) -> f64) -> f64 {
    (0..TRIALS).map(f).fold(0.0, f64::max)
}

fn check_conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (c_in, c_out) = (r.gen_range(1..=3), r.gen_range(1..=3));
    let (h, w, n) = (r.gen_range(3..=5), r.gen_range(3..=5), r.gen_range(1..=2));
    let pad = (seed % 2) as usize;
    let mut params = ParamSet::new();
    let wt = params.add_uniform("w", &[c_out, c_in, 3, 3], c_in * 9, &mut r);
    let b = params.add_uniform("b", &[c_out], c_in * 9, &mut r);
    let x = random_tensor(&mut r, &[c_in, n, h, w]);
    let problem = Problem {
        params,
        checked: vec![wt, b],
        inputs: vec![x],
    };
    max_rel_error(problem, &move |t, v| t.conv2d(v[0], wt, b, pad), &mut r)
}

fn check_linear(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_in, m, batch) = (r.gen_range(1..=6), r.gen_range(1..=5), r.gen_range(1..=4));
    let mut params = ParamSet::new();
    let wt = params.add_uniform("w", &[m, n_in], n_in, &mut r);
    let b = params.add_uniform("b", &[m], n_in, &mut r);
    let x = random_tensor(&mut r, &[n_in, batch]);
    let problem = Problem {
        params,
        checked: vec![wt, b],
        inputs: vec![x],
    };
    max_rel_error(problem, &move |t, v| t.linear(v[0], wt, b), &mut r)
}

fn unary(seed: u64, kink_free: bool, op: fn(&mut Tape, Var) -> Var) -> f64 {
    let mut r = rng(seed);
    let shape = [r.gen_range(1..=6), r.gen_range(1..=4)];
    let x = if kink_free {
        kink_free_tensor(&mut r, &shape)
    } else {
        random_tensor(&mut r, &shape)
    };
    let problem = Problem {
        params: ParamSet::new(),
        checked: vec![],
        inputs: vec![x],
    };
    max_rel_error(problem, &move |t, v| Ok(op(t, v[0])), &mut r)
}

fn check_relu(seed: u64) -> f64 {
    unary(seed, true, |t, v| t.relu(v))
}

fn check_tanh(seed: u64) -> f64 {
    unary(seed, false, |t, v| t.tanh(v))
}

fn check_sigmoid(seed: u64) -> f64 {
    unary(seed, false, |t, v| t.sigmoid(v))
}

fn check_log_softmax(seed: u64) -> f64 {
    unary(seed, false, |t, v| t.log_softmax(v))
}

fn check_highway(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [r.gen_range(1..=5), r.gen_range(1..=4)];
    let mut params = ParamSet::new();
    let lambda = params.add_lambda("lambda");
    set_scalar(&mut params, lambda, r.gen_range(-1.5..1.5));
    let f = random_tensor(&mut r, &shape);
    let skip = random_tensor(&mut r, &shape);
    let problem = Problem {
        params,
        checked: vec![lambda],
        inputs: vec![f, skip],
    };
    max_rel_error(problem, &move |t, v| t.highway_add(v[0], v[1], lambda), &mut r)
}

/// conv → tanh → conv → λ-skip → flatten → fc → sigmoid ‖ fc → log-softmax.
fn check_net(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (c, h, w) = (2, 4, 4);
    let mut params = ParamSet::new();
    let w1 = params.add_uniform("w1", &[c, c, 3, 3], c * 9, &mut r);
    let b1 = params.add_uniform("b1", &[c], c * 9, &mut r);
    let w2 = params.add_uniform("w2", &[c, c, 3, 3], c * 9, &mut r);
    let b2 = params.add_uniform("b2", &[c], c * 9, &mut r);
    let lambda = params.add_lambda("lambda");
    set_scalar(&mut params, lambda, r.gen_range(0.5..1.5));
    let flat = c * h * w;
    let w3 = params.add_uniform("w3", &[3, flat], flat, &mut r);
    let b3 = params.add_uniform("b3", &[3], flat, &mut r);
    let w4 = params.add_uniform("w4", &[1, 3], 3, &mut r);
    let b4 = params.add_uniform("b4", &[1], 3, &mut r);
    let x = random_tensor(&mut r, &[c, 1, h, w]);
    let problem = Problem {
        params,
        checked: vec![w1, b1, w2, b2, lambda, w3, b3, w4, b4],
        inputs: vec![x],
    };
    let build = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
        let a = t.conv2d(v[0], w1, b1, 1)?;
        let a = t.tanh(a);
        let a = t.conv2d(a, w2, b2, 1)?;
        let y = t.highway_add(a, v[0], lambda)?;
        let y = t.reshape(y, vec![flat, 1])?;
        let s = t.linear(y, w3, b3)?;
        let conf = t.linear(s, w4, b4)?;
        let conf = t.sigmoid(conf);
        let ls = t.log_softmax(s);
        t.concat(ls, conf)
    };
    max_rel_error(problem, &build, &mut r)
}
