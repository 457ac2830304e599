//! Numeric traits shared by the analytic modules.
//!
//! Validation only needs ordered probabilities with exact addition, so it is
//! written against [`Probability`] and works for both floats and exact
//! rationals. Everything that takes logarithms or iterates to a fixed point
//! is written against [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, One, ToPrimitive, Zero};

/// Probability values: anything ordered with exact `+`, `0` and `1`.
pub trait Probability: Clone + PartialOrd + Zero + One + ToPrimitive + Debug {}

impl<T> Probability for T where T: Clone + PartialOrd + Zero + One + ToPrimitive + Debug {}

/// Floating point scalar used by the generating-function machinery (f32/f64).
pub trait Scalar: Float + FromPrimitive + Sum + Probability + Display + Default + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum + Probability + Display + Default + Send + Sync + 'static {}

/// Converts an `f64` literal (tolerances, step sizes) into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// `x·log x` with the `0·log 0 = 0` convention.
#[inline]
pub fn xlogx<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

/// Maximum absolute relative gap between two values, guarded near zero.
pub fn rel_gap<T: Scalar>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs()).max(lit(1e-300));
    (a - b).abs() / scale
}

/// Lossy conversion into `f64` for reporting.
#[inline]
pub fn to_f64<T: ToPrimitive>(x: &T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
