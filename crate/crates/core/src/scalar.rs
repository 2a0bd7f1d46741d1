//! Floating-point scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the mixture, penalty and optimizer code is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// (1e-9 row sums, 1e-12 symmetry) are `f64` tolerances.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Lower clamp applied to every probability before taking its logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// `ln(max(p, 1e-12))`.
#[inline]
pub fn clamped_ln<T: Scalar>(p: T) -> T {
    p.max(T::lit(LOG_CLAMP)).ln()
}

/// Numerically stable `ln Σ exp(v)`. Returns `-inf` for an empty slice.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// In-place softmax; returns the log-normalizer.
pub fn softmax_in_place<T: Scalar>(values: &mut [T]) -> T {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}
