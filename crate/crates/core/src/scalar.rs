use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by every numeric stage of the pipeline.
///
/// Implemented for `f32` and `f64`. `Display`/`FromStr` are required so that
/// fitted models round-trip through the text model format bit-exactly.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn l2_norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Scale `v` to unit L2 norm in place; an all-zero vector is left untouched.
pub(crate) fn l2_normalize<T: Real>(v: &mut [T]) {
    let n = l2_norm(v);
    if n > T::zero() {
        for x in v.iter_mut() {
            *x = *x / n;
        }
    }
}
