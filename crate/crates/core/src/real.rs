//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`], a thin bundle
//! of `num_traits` capabilities satisfied by `f32` and `f64`. Public types
//! default their scalar parameter to `f64`, so downstream code that does not
//! care about the scalar type never sees it.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by tensors, the tape, and the optimizers.
///
/// A blanket impl covers every type with the listed capabilities; in practice
/// that is `f32` and `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal to the generic scalar type.
///
/// Panics only if the target type cannot represent any `f64`, which cannot
/// happen for `f32`/`f64`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal must convert to the scalar type")
}

/// Squared Euclidean norm of a slice.
#[inline]
pub fn norm_sq<T: Real>(xs: &[T]) -> T {
    xs.iter().map(|&x| x * x).sum()
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm<T: Real>(xs: &[T]) -> T {
    norm_sq(xs).sqrt()
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
