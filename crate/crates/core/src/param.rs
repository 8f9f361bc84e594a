//! Flat parameter vectors.
//!
//! Optimizers in this crate treat a network as one flat vector ω ∈ ℝ^d; the
//! model layer is responsible for mapping that vector to and from its layer
//! tensors. [`ParamVector`] is that flat view plus the handful of BLAS-1
//! operations the optimizers need.

use crate::error::{CoreError, Result};
use crate::real::{self, Real};
use crate::tensor::Tensor;

/// A flat, owned parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T: Real = f64> {
    values: Vec<T>,
}

impl<T: Real> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    /// All-zeros vector of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        real::norm(&self.values)
    }

    pub fn dot(&self, other: &Self) -> T {
        real::dot(&self.values, &other.values)
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &Self, c: T) {
        debug_assert_eq!(self.dim(), other.dim());
        for (x, &y) in self.values.iter_mut().zip(&other.values) {
            *x += c * y;
        }
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Splits the flat vector into tensors of the given shapes.
    ///
    /// Fails unless the shape sizes sum exactly to the vector dimension.
    pub fn to_tensors(&self, shapes: &[Vec<usize>]) -> Result<Vec<Tensor<T>>> {
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if total != self.dim() {
            return Err(CoreError::DimMismatch {
                op: "to_tensors",
                detail: format!("shapes cover {total} values, vector has {}", self.dim()),
            });
        }
        let mut out = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for shape in shapes {
            let len: usize = shape.iter().product();
            out.push(Tensor::from_vec(
                shape.clone(),
                self.values[offset..offset + len].to_vec(),
            )?);
            offset += len;
        }
        Ok(out)
    }

    /// Concatenates tensors back into one flat vector (inverse of
    /// [`ParamVector::to_tensors`]).
    pub fn from_tensors(tensors: &[Tensor<T>]) -> Self {
        let mut values = Vec::with_capacity(tensors.iter().map(|t| t.len()).sum());
        for t in tensors {
            values.extend_from_slice(t.data());
        }
        Self { values }
    }
}

impl<T: Real> From<Vec<T>> for ParamVector<T> {
    fn from(values: Vec<T>) -> Self {
        Self::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_preserves_order() {
        let v = ParamVector::new((0..10).map(|i| i as f64).collect());
        let shapes = vec![vec![2, 3], vec![4]];
        let tensors = v.to_tensors(&shapes).unwrap();
        assert_eq!(tensors[0].shape(), &[2, 3]);
        assert_eq!(tensors[1].data(), &[6.0, 7.0, 8.0, 9.0]);
        let back = ParamVector::from_tensors(&tensors);
        assert_eq!(back, v);
    }

    #[test]
    fn to_tensors_rejects_wrong_total() {
        let v: ParamVector = ParamVector::zeros(5);
        assert!(v.to_tensors(&[vec![2, 3]]).is_err());
    }

    #[test]
    fn add_scaled_is_axpy() {
        let mut a = ParamVector::new(vec![1.0, 2.0]);
        a.add_scaled(&ParamVector::new(vec![10.0, -1.0]), 0.5);
        assert_eq!(a.as_slice(), &[6.0, 1.5]);
    }
}
