//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real floating point type the solvers are generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; every literal in the crate goes through here.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }

    #[inline]
    fn sq(self) -> Self {
        self * self
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + FftNum
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// Maximum of a slice, `-inf` when empty.
pub fn max_of<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
}

/// Minimum of a slice, `+inf` when empty.
pub fn min_of<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::infinity(), |m, &x| m.min(x))
}

/// Largest absolute value of a slice.
pub fn sup_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}
