//! Fully connected layer.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Activation};
use crate::tensor::{Param, Tape, Tensor};
use rand::Rng;

/// `y = f(x W^T + b)` over rows of `x`.
///
/// Weights are stored `(out_features, in_features)`, one row per output
/// unit; inputs are `(rows, in_features)` where a row is one sample or one
/// time frame.
pub struct DenseLayer {
    w: Param,
    b: Param,
    activation: Activation,
}

impl DenseLayer {
    /// Fresh layer with Glorot-uniform weights and zero bias.
    pub fn new(in_features: usize, out_features: usize, activation: Activation, rng: &mut impl Rng) -> Result<DenseLayer> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::arg("dense layer dimensions must be positive"));
        }
        let w = glorot_uniform(&[out_features, in_features], in_features, out_features, rng);
        Ok(DenseLayer {
            w: Param::new("dense.w", w),
            b: Param::new("dense.b", Array::zeros(&[out_features])),
            activation,
        })
    }

    /// Layer over existing weights, e.g. loaded from disk.
    pub fn from_parts(w: Array, b: Array, activation: Activation) -> Result<DenseLayer> {
        if w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[0] {
            return Err(Error::arg(format!(
                "dense weights want (out, in) + (out,), got {:?} + {:?}",
                w.shape(),
                b.shape()
            )));
        }
        Ok(DenseLayer {
            w: Param::new("dense.w", w),
            b: Param::new("dense.b", b),
            activation,
        })
    }

    pub fn in_features(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> Vec<Param> {
        vec![self.w.clone(), self.b.clone()]
    }

    /// Maps `(rows, in_features)` to `(rows, out_features)`.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Tensor<'t>) -> Result<Tensor<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.in_features() {
            return Err(Error::arg(format!(
                "dense layer expects (rows, {}), got {:?}",
                self.in_features(),
                shape
            )));
        }
        let w = tape.param(&self.w).transpose()?;
        let b = tape.param(&self.b);
        let y = x.matmul(w)?.add(b)?;
        Ok(self.activation.apply(y))
    }
}
