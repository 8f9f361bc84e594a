//! Dense row-major tensors.
//!
//! [`Tensor`] is deliberately minimal: an owned `Vec<T>` plus a shape. All
//! math lives on the autodiff tape ([`crate::tape`]); the tensor type only
//! provides construction, shape bookkeeping, and element access.

use crate::error::{CoreError, Result};
use crate::real::Real;

/// A dense tensor with row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from a shape and matching flat data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {shape:?} holds {expect} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    /// All-zeros tensor.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); len],
        }
    }

    /// All-ones tensor.
    pub fn ones(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![T::one(); len],
        }
    }

    /// Scalar (shape `[1]`) tensor.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// The value of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(CoreError::ShapeMismatch {
                op: "item",
                detail: format!("expected a single element, shape is {:?}", self.shape),
            })
        }
    }

    /// Number of rows of a 2-D tensor (or 1 for 1-D).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Number of columns of a 1-D or 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    /// Element `(r, c)` of a 2-D tensor.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        debug_assert!(r < self.rows() && c < self.cols());
        self.data[r * self.cols() + c]
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Same data under a new shape of equal size.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.len() {
            return Err(CoreError::ShapeMismatch {
                op: "reshaped",
                detail: format!("cannot view {} values as {shape:?}", self.len()),
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }
}
