use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layer vocabulary stored in checkpoints next to the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv2d {
        name: String,
        c_in: usize,
        c_out: usize,
        kernel: [usize; 2],
        padding: usize,
    },
    FullyConnected {
        name: String,
        n_in: usize,
        width: usize,
    },
    Relu,
    Tanh,
    LogSoftmax,
    Sigmoid,
    ConstantHighwayAdd {
        name: String,
    },
}

impl LayerSpec {
    /// Spatial output extent for an input extent of `n`, when the layer changes it.
    pub fn out_extent(&self, n: usize) -> usize {
        match self {
            LayerSpec::Conv2d { kernel, padding, .. } => n + 2 * padding + 1 - kernel[0],
            _ => n,
        }
    }
}

/// Convolution whose weights live in a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub padding: usize,
    pub spec: LayerSpec,
}

impl Conv2d {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * k * k;
        let weight = params.add_uniform(format!("{name}.weight"), &[c_out, c_in, k, k], fan_in, rng);
        let bias = params.add_uniform(format!("{name}.bias"), &[c_out], fan_in, rng);
        Conv2d {
            weight,
            bias,
            padding,
            spec: LayerSpec::Conv2d {
                name: name.into(),
                c_in,
                c_out,
                kernel: [k, k],
                padding,
            },
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.conv2d(x, self.weight, self.bias, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: LayerSpec,
}

impl Linear {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, n_in: usize, width: usize, rng: &mut R) -> Self {
        let weight = params.add_uniform(format!("{name}.weight"), &[width, n_in], n_in, rng);
        let bias = params.add_uniform(format!("{name}.bias"), &[width], n_in, rng);
        Linear {
            weight,
            bias,
            spec: LayerSpec::FullyConnected {
                name: name.into(),
                n_in,
                width,
            },
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.linear(x, self.weight, self.bias)
    }
}

fn scratch(weights: &Tensor, bias: &Tensor) -> (ParamSet, ParamId, ParamId) {
    let mut set = ParamSet::new();
    let w = set.add("weight", weights.clone());
    let b = set.add("bias", bias.clone());
    (set, w, b)
}

/// Stand-alone convolution: `[C_in, H, W]` → `[C_out, H', W']`.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, padding: usize) -> Result<Tensor> {
    let (set, w, b) = scratch(weights, bias);
    let mut tape = Tape::inference(&set);
    let x = tape.input(input.clone());
    let y = tape.conv2d(x, w, b, padding)?;
    Ok(tape.take(y))
}

/// Stand-alone fully-connected layer: `weights·input + bias`.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (set, w, b) = scratch(weights, bias);
    let mut tape = Tape::inference(&set);
    let x = tape.input(input.clone());
    let y = tape.linear(x, w, b)?;
    Ok(tape.take(y))
}

/// Stand-alone constant highway connection `f_out + λ·skip_in`.
pub fn highway_add(f_out: &Tensor, skip_in: &Tensor, lambda: f64) -> Result<Tensor> {
    if f_out.shape() != skip_in.shape() {
        return Err(Error::Config(format!(
            "highway_add: shape {:?} vs {:?}",
            f_out.shape(),
            skip_in.shape()
        )));
    }
    let mut set = ParamSet::new();
    let l = set.add("lambda", Tensor::scalar(lambda));
    let mut tape = Tape::inference(&set);
    let f = tape.input(f_out.clone());
    let s = tape.input(skip_in.clone());
    let y = tape.highway_add(f, s, l)?;
    Ok(tape.take(y))
}
