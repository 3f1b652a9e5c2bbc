//! Plain row-major n-dimensional `f64` arrays.
//!
//! This is deliberately minimal: a shape vector plus a flat data buffer. It is
//! the common currency between the DSP side (spectrogram grids) and the
//! neural-network side (parameter blocks, batches) without pulling in a full
//! linear-algebra crate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    /// Builds an array, checking that `data.len()` matches the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Array> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::arg(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Array {
        let n: usize = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Array {
        let n: usize = shape.iter().product();
        Array {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// One-dimensional array over the given values.
    pub fn from_vec(data: Vec<f64>) -> Array {
        Array {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Array {
        Array {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// 2-D convenience accessor (`self` must be rank 2).
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: f64) {
        debug_assert_eq!(self.rank(), 2);
        self.data[r * self.shape[1] + c] = v;
    }

    /// Same data, new shape. Errors when the element counts differ.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Array> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::arg(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Restricts `axis` to `start..start + len`, copying the block out.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Array> {
        if axis >= self.rank() || start + len > self.shape[axis] {
            return Err(Error::arg(format!(
                "narrow axis {} range {}..{} out of bounds for shape {:?}",
                axis,
                start,
                start + len,
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut shape = self.shape.clone();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * self.shape[axis] + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Ok(Array { shape, data })
    }

    /// Stacks equally-shaped arrays along a new leading axis.
    pub fn stack(parts: &[&Array]) -> Result<Array> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("stack of zero arrays"))?;
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::arg(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    p.shape, first.shape
                )));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(parts.len());
        shape.extend_from_slice(&first.shape);
        Ok(Array { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Array::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Array::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn offsets_are_row_major() {
        let a = Array::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(a.at(&[0, 0]), 0.0);
        assert_eq!(a.at(&[0, 2]), 2.0);
        assert_eq!(a.at(&[1, 0]), 3.0);
        assert_eq!(a.at2(1, 2), 5.0);
    }

    #[test]
    fn narrow_copies_the_requested_block() {
        // shape (2, 3): rows [0 1 2], [3 4 5]; keep middle column.
        let a = Array::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let c = a.narrow(1, 1, 1).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[1.0, 4.0]);
        // dropping the last row of axis 0
        let r = a.narrow(0, 0, 1).unwrap();
        assert_eq!(r.shape(), &[1, 3]);
        assert_eq!(r.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn stack_adds_a_leading_axis() {
        let a = Array::from_vec(vec![1.0, 2.0]);
        let b = Array::from_vec(vec![3.0, 4.0]);
        let s = Array::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn reshape_requires_matching_count() {
        let a = Array::zeros(&[2, 3]);
        assert!(a.clone().reshaped(vec![3, 2]).is_ok());
        assert!(a.reshaped(vec![4, 2]).is_err());
    }
}
