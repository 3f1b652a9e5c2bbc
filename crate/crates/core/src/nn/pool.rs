//! Pooling over feature maps.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping max pooling of the trailing two axes; the pool extent is
/// also the stride, and it must divide the input exactly.
pub struct MaxPoolLayer {
    pool: (usize, usize),
}

impl MaxPoolLayer {
    pub fn new(pool: (usize, usize)) -> Result<MaxPoolLayer> {
        if pool.0 == 0 || pool.1 == 0 {
            return Err(Error::arg("pool extents must be positive"));
        }
        Ok(MaxPoolLayer { pool })
    }

    pub fn pool(&self) -> (usize, usize) {
        self.pool
    }

    pub fn output_shape(&self, in_shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (k, f, t) = in_shape;
        if f % self.pool.0 != 0 || t % self.pool.1 != 0 {
            return Err(Error::arg(format!(
                "pool {:?} does not divide input {f}x{t}",
                self.pool
            )));
        }
        Ok((k, f / self.pool.0, t / self.pool.1))
    }

    pub fn forward<'t>(&self, x: Tensor<'t>) -> Result<Tensor<'t>> {
        x.maxpool2d(self.pool)
    }
}

/// Collapses each feature map to its mean: `(J, F, T)` becomes `(1, J)`,
/// ready for a dense head. Batched input `(B, J, F, T)` becomes `(B, J)`.
pub fn global_avg_pool(x: Tensor<'_>) -> Result<Tensor<'_>> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::arg(format!(
            "global pooling wants (.., J, F, T), got {shape:?}"
        )));
    }
    let rank = shape.len();
    let (f, t) = (shape[rank - 2], shape[rank - 1]);
    let pooled = x
        .reduce_sum(Some(rank - 1))?
        .reduce_sum(Some(rank - 2))?
        .mul_scalar(1.0 / (f * t) as f64);
    if rank == 3 {
        // one sample: shape is now (J,); present it as a single row
        let j = shape[0];
        pooled.reshape(&[1, j])
    } else {
        Ok(pooled)
    }
}
