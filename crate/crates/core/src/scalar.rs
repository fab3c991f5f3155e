//! Scalar abstraction for the numeric kernels.
//!
//! The quantile, score and integrand computations are written against this
//! trait so they can be instantiated at `f32` or `f64`; the crate-level
//! [`crate::Real`] alias picks the precision used by the pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point scalar usable by the numeric kernels.
pub trait Scalar: Float + FloatConst + NumAssign + Sum + Debug + Display + 'static {
    /// Lossy conversion from `f64`, for constants baked into the algorithms.
    fn from_f64(x: f64) -> Self;
}

impl<T> Scalar for T
where
    T: Float + FloatConst + NumAssign + Sum + Debug + Display + 'static,
{
    #[inline]
    fn from_f64(x: f64) -> Self {
        T::from(x).expect("f64 constant must be representable")
    }
}
