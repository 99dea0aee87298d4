//! Linear tape of layer applications with per-layer manual backward.

use super::kernels::{self, ConvGeom};
use super::param::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const NORM_EPS: f64 = 1e-12;

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: ParamId,
        bias: ParamId,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Linear {
        input: Var,
        weight: ParamId,
        bias: ParamId,
        m: usize,
        n: usize,
        batch: usize,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    LogSoftmax {
        input: Var,
        d: usize,
        cols: usize,
    },
    HighwayAdd {
        f: Var,
        skip: Var,
        lambda: ParamId,
    },
    Add(Var, Var),
    L2Normalize {
        input: Var,
        d: usize,
        cols: usize,
    },
    Dot {
        a: Var,
        b: Var,
        d: usize,
        cols: usize,
    },
    Concat(Var, Var),
    Columns {
        input: Var,
        start: usize,
        total: usize,
    },
    Reshape(Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward pass over parameters borrowed from a [`ParamSet`].
///
/// The tape never mutates parameters, so several tapes may run forward
/// passes over the same set concurrently. Gradients are returned from
/// [`Tape::backward`] and written into the set afterwards.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    record: bool,
}

/// Result of a backward pass.
pub struct Gradients {
    params: Vec<Option<Vec<f64>>>,
    vars: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].as_deref()
    }

    pub fn var(&self, v: Var) -> Option<&[f64]> {
        self.vars[v.0].as_deref()
    }

    /// Accumulate into each participating parameter's gradient slot.
    pub fn apply_to(&self, set: &mut ParamSet) -> Result<()> {
        for (i, g) in self.params.iter().enumerate() {
            if let Some(g) = g {
                set.get_mut(ParamId(i)).value.accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}

fn shape_err<T>(what: &str, a: &[usize], b: &[usize]) -> Result<T> {
    Err(Error::Config(format!("{what}: shape {a:?} vs {b:?}")))
}

fn acc(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(s) => {
            for (a, b) in s.iter_mut().zip(g) {
                *a += b;
            }
        }
        None => *slot = Some(g.to_vec()),
    }
}

impl<'p> Tape<'p> {
    /// Tape that keeps everything needed for [`Tape::backward`].
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            record: true,
        }
    }

    /// Forward-only tape: skips caches, `backward` is refused.
    pub fn inference(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn params(&self) -> &ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Take ownership of a value, leaving the tape unusable for backward.
    pub fn take(mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    /// 2-D cross-correlation. `x` is `[C, H, W]` or `[C, N, H, W]`, the
    /// weight `[C_out, C, kh, kw]` and the bias `[C_out]`.
    pub fn conv2d(&mut self, x: Var, weight: ParamId, bias: ParamId, padding: usize) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let (c_in, batch, h, w) = match xs.as_slice() {
            [c, h, w] => (*c, 1, *h, *w),
            [c, n, h, w] => (*c, *n, *h, *w),
            _ => return Err(Error::Config(format!("conv2d input must be 3-D or 4-D, got {xs:?}"))),
        };
        let wt = self.params.value(weight);
        let ws = wt.shape();
        if ws.len() != 4 || ws[1] != c_in {
            return shape_err("conv2d weight/input channels", ws, &xs);
        }
        if self.params.value(bias).len() != ws[0] {
            return shape_err("conv2d bias", self.params.value(bias).shape(), ws);
        }
        let geom = ConvGeom {
            c_in,
            batch,
            h,
            w,
            c_out: ws[0],
            kh: ws[2],
            kw: ws[3],
            pad: padding,
        };
        if h + 2 * padding < geom.kh || w + 2 * padding < geom.kw {
            return Err(Error::Config(format!(
                "kernel {}x{} does not fit padded input {}x{}",
                geom.kh,
                geom.kw,
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let (out, cols) = kernels::conv_forward(&geom, self.value(x).data(), wt.data(), self.params.value(bias).data());
        let shape = if xs.len() == 3 {
            vec![geom.c_out, geom.out_h(), geom.out_w()]
        } else {
            vec![geom.c_out, batch, geom.out_h(), geom.out_w()]
        };
        let cols = if self.record { cols } else { Vec::new() };
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Conv2d {
                input: x,
                weight,
                bias,
                geom,
                cols,
            },
        ))
    }

    /// Fully-connected layer on `[n]` or `[n, N]`.
    pub fn linear(&mut self, x: Var, weight: ParamId, bias: ParamId) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let (n, batch) = match xs.as_slice() {
            [n] => (*n, 1),
            [n, b] => (*n, *b),
            _ => return Err(Error::Config(format!("linear input must be 1-D or 2-D, got {xs:?}"))),
        };
        let ws = self.params.value(weight).shape();
        if ws.len() != 2 || ws[1] != n {
            return shape_err("linear weight/input", ws, &xs);
        }
        let m = ws[0];
        if self.params.value(bias).len() != m {
            return shape_err("linear bias", self.params.value(bias).shape(), ws);
        }
        let out = kernels::linear_forward(
            m,
            n,
            batch,
            self.value(x).data(),
            self.params.value(weight).data(),
            self.params.value(bias).data(),
        );
        let shape = if xs.len() == 1 { vec![m] } else { vec![m, batch] };
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Linear {
                input: x,
                weight,
                bias,
                m,
                n,
                batch,
            },
        ))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    /// Log-softmax over the leading axis (one distribution per column).
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = t.shape()[0];
        let cols = t.trailing();
        let out = kernels::log_softmax(d, cols, t.data());
        let t = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(t, Op::LogSoftmax { input: x, d, cols })
    }

    /// `f + λ·skip` with a learned scalar λ.
    pub fn highway_add(&mut self, f: Var, skip: Var, lambda: ParamId) -> Result<Var> {
        let (fs, ss) = (self.value(f).shape(), self.value(skip).shape());
        if fs != ss {
            return shape_err("highway_add", fs, ss);
        }
        if self.params.value(lambda).len() != 1 {
            return Err(Error::Config("highway gate must be a scalar".into()));
        }
        let l = self.params.scalar(lambda);
        let data = self
            .value(f)
            .data()
            .iter()
            .zip(self.value(skip).data())
            .map(|(a, b)| a + l * b)
            .collect();
        let t = Tensor::new(fs.to_vec(), data)?;
        Ok(self.push(t, Op::HighwayAdd { f, skip, lambda }))
    }

    /// Plain residual addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return shape_err("add", sa, sb);
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Scale every column to unit L2 norm over the leading axis.
    pub fn l2_normalize(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = t.shape()[0];
        let cols = t.trailing();
        let mut out = t.data().to_vec();
        for c in 0..cols {
            let s: f64 = (0..d).map(|i| out[i * cols + c].powi(2)).sum();
            let inv = 1.0 / (s + NORM_EPS).sqrt();
            for i in 0..d {
                out[i * cols + c] *= inv;
            }
        }
        let t = Tensor::new(t.shape().to_vec(), out).expect("same shape");
        self.push(t, Op::L2Normalize { input: x, d, cols })
    }

    /// Per-column dot product over the leading axis: `[F, M]·[F, M] → [M]`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return shape_err("dot", sa, sb);
        }
        let d = sa[0];
        let cols = self.value(a).trailing();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; cols];
        for i in 0..d {
            for c in 0..cols {
                out[c] += da[i * cols + c] * db[i * cols + c];
            }
        }
        let shape = if sa.len() == 1 { vec![1] } else { sa[1..].to_vec() };
        Ok(self.push(Tensor::new(shape, out)?, Op::Dot { a, b, d, cols }))
    }

    /// Concatenate along the leading axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != sb.len() || sa[1..] != sb[1..] {
            return shape_err("concat", sa, sb);
        }
        let mut shape = sa.to_vec();
        shape[0] += sb[0];
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(a, b)))
    }

    /// Columns `start..start + len` of a `[F, M]` matrix.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || start + len > t.shape()[1] {
            return Err(Error::Config(format!(
                "columns {start}..{} of {:?}",
                start + len,
                t.shape()
            )));
        }
        let (f, total) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(f * len);
        for i in 0..f {
            data.extend_from_slice(&t.data()[i * total + start..i * total + start + len]);
        }
        let out = Tensor::new(vec![f, len], data)?;
        Ok(self.push(out, Op::Columns { input: x, start, total }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Backpropagate from a single-element loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Config(format!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_seeded(&[(loss, vec![1.0])])
    }

    /// Backpropagate from explicit output gradients.
    pub fn backward_seeded(&self, seeds: &[(Var, Vec<f64>)]) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if !self.record {
            return Err(Error::State("backward on an inference tape".into()));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut pg: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        for (v, s) in seeds {
            if s.len() != self.value(*v).len() {
                return shape_err("seed gradient", &[s.len()], self.value(*v).shape());
            }
            acc(&mut g[v.0], s);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.data();
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                    cols,
                } => {
                    let (dx, dw, db) = kernels::conv_backward(geom, cols, self.params.value(*weight).data(), &dy);
                    acc(&mut g[input.0], &dx);
                    acc(&mut pg[weight.0], &dw);
                    acc(&mut pg[bias.0], &db);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                    m,
                    n,
                    batch,
                } => {
                    let (dx, dw, db) = kernels::linear_backward(
                        *m,
                        *n,
                        *batch,
                        self.value(*input).data(),
                        self.params.value(*weight).data(),
                        &dy,
                    );
                    acc(&mut g[input.0], &dx);
                    acc(&mut pg[weight.0], &dw);
                    acc(&mut pg[bias.0], &db);
                }
                Op::Relu(x) => {
                    let dx: Vec<f64> = dy.iter().zip(y).map(|(d, &o)| if o > 0.0 { *d } else { 0.0 }).collect();
                    acc(&mut g[x.0], &dx);
                }
                Op::Tanh(x) => {
                    let dx: Vec<f64> = dy.iter().zip(y).map(|(d, o)| d * (1.0 - o * o)).collect();
                    acc(&mut g[x.0], &dx);
                }
                Op::Sigmoid(x) => {
                    let dx: Vec<f64> = dy.iter().zip(y).map(|(d, o)| d * o * (1.0 - o)).collect();
                    acc(&mut g[x.0], &dx);
                }
                Op::LogSoftmax { input, d, cols } => {
                    let mut dx = dy.clone();
                    for c in 0..*cols {
                        let s: f64 = (0..*d).map(|i| dy[i * cols + c]).sum();
                        for i in 0..*d {
                            dx[i * cols + c] -= y[i * cols + c].exp() * s;
                        }
                    }
                    acc(&mut g[input.0], &dx);
                }
                Op::HighwayAdd { f, skip, lambda } => {
                    let l = self.params.scalar(*lambda);
                    let sk = self.value(*skip).data();
                    let dl: f64 = dy.iter().zip(sk).map(|(a, b)| a * b).sum();
                    let ds: Vec<f64> = dy.iter().map(|d| d * l).collect();
                    acc(&mut g[f.0], &dy);
                    acc(&mut g[skip.0], &ds);
                    acc(&mut pg[lambda.0], &[dl]);
                }
                Op::Add(a, b) => {
                    acc(&mut g[a.0], &dy);
                    acc(&mut g[b.0], &dy);
                }
                Op::L2Normalize { input, d, cols } => {
                    let x = self.value(*input).data();
                    let mut dx = vec![0.0; x.len()];
                    for c in 0..*cols {
                        let s: f64 = (0..*d).map(|i| x[i * cols + c].powi(2)).sum();
                        let n = (s + NORM_EPS).sqrt();
                        let proj: f64 = (0..*d).map(|i| dy[i * cols + c] * y[i * cols + c]).sum();
                        for i in 0..*d {
                            dx[i * cols + c] = (dy[i * cols + c] - y[i * cols + c] * proj) / n;
                        }
                    }
                    acc(&mut g[input.0], &dx);
                }
                Op::Dot { a, b, d, cols } => {
                    let (da, db) = (self.value(*a).data(), self.value(*b).data());
                    let mut ga = vec![0.0; da.len()];
                    let mut gb = vec![0.0; db.len()];
                    for i in 0..*d {
                        for c in 0..*cols {
                            ga[i * cols + c] = dy[c] * db[i * cols + c];
                            gb[i * cols + c] = dy[c] * da[i * cols + c];
                        }
                    }
                    acc(&mut g[a.0], &ga);
                    acc(&mut g[b.0], &gb);
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).len();
                    acc(&mut g[a.0], &dy[..na]);
                    acc(&mut g[b.0], &dy[na..]);
                }
                Op::Columns { input, start, total } => {
                    let len = node.value.shape()[1];
                    let f = node.value.shape()[0];
                    let mut dx = vec![0.0; f * total];
                    for i in 0..f {
                        dx[i * total + start..i * total + start + len].copy_from_slice(&dy[i * len..(i + 1) * len]);
                    }
                    acc(&mut g[input.0], &dx);
                }
                Op::Reshape(x) => acc(&mut g[x.0], &dy),
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(&mut g[x.0], &vec![dy[0]; n]);
                }
            }
            g[idx] = Some(dy);
        }
        Ok(Gradients { params: pg, vars: g })
    }
}
