//! Trainable layers built from tape operations.
//!
//! Layers own their weights as [`Param`](crate::tensor::Param) cells and
//! expose `forward(tape, x)` that binds those cells onto the caller's tape,
//! so one backward sweep reaches every layer in a model. They are shape
//! conventions over the raw ops, nothing more; model assembly (flattening
//! between blocks, folding feature maps into sequences) lives in
//! [`zoo`](crate::zoo).

mod conv;
mod dense;
mod pool;
mod rnn;

pub use conv::{Conv1dLayer, Conv2dLayer};
pub use dense::DenseLayer;
pub use pool::{global_avg_pool, MaxPoolLayer};
pub use rnn::{RecurrentLayer, RnnDirection, RnnMode};

use crate::array::Array;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use std::fmt;
use std::str::FromStr;

/// Pointwise (or, for softmax, row-wise) nonlinearity applied after a
/// layer's affine part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Logistic,
    Tanh,
    Relu,
    LeakyRelu(f64),
    /// Normalizes the last axis to a probability row.
    Softmax,
}

impl Activation {
    pub fn apply<'t>(&self, x: Tensor<'t>) -> Tensor<'t> {
        match self {
            Activation::Identity => x,
            Activation::Logistic => x.logistic(),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
            Activation::LeakyRelu(alpha) => x.leaky_relu(*alpha),
            Activation::Softmax => x.softmax(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Logistic => write!(f, "logistic"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(alpha) => write!(f, "leaky_relu({alpha})"),
            Activation::Softmax => write!(f, "softmax"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Activation> {
        match s {
            "identity" => Ok(Activation::Identity),
            "logistic" => Ok(Activation::Logistic),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            other => {
                if let Some(alpha) = other
                    .strip_prefix("leaky_relu(")
                    .and_then(|r| r.strip_suffix(')'))
                {
                    let alpha: f64 = alpha
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad leaky_relu slope in {other:?}")))?;
                    return Ok(Activation::LeakyRelu(alpha));
                }
                Err(Error::Parse(format!("unknown activation {other:?}")))
            }
        }
    }
}

/// Glorot/Xavier uniform draw: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(shape, a, rng)
}

/// Uniform draw `U(-a, a)` into a fresh array.
pub fn uniform_init(shape: &[usize], a: f64, rng: &mut impl Rng) -> Array {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-a..a)).collect();
    Array::new(shape.to_vec(), data).expect("shape/product agree by construction")
}
