//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`] so the same code runs in `f32`
//! (storage precision) and `f64` (the default for fitting and training).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar usable by the alignment, retriever and metric code.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Lossy for `f32`.
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Converts from the on-disk `f32` representation.
    fn from_storage(v: f32) -> Self;
    fn to_storage(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_storage(v: f32) -> Self {
        v
    }
    #[inline]
    fn to_storage(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_storage(v: f32) -> Self {
        v as f64
    }
    #[inline]
    fn to_storage(self) -> f32 {
        self as f32
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
