//! Floating-point scalar abstraction shared by tensors and geometry.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the crate: `f32` or `f64`.
///
/// Reductions (convolution, pooling sums) widen to `f64` via [`Scalar::widen`]
/// regardless of the storage type.
pub trait Scalar:
    Float
    + FloatConst
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
    fn widen(self) -> f64;
    fn narrow(v: f64) -> Self;

    /// Literal conversion, e.g. `T::of(0.5)`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::narrow(v)
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::narrow(v as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline]
    fn narrow(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(v: f64) -> Self {
        v
    }
}
