//! Scalar abstraction for the numeric kernels.
//!
//! Everything in this crate is generic over [`Real`], a float-like scalar
//! (`f32` or `f64` in practice). Concrete `f64` aliases for the main types
//! live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum<Self> + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssignOps + Sum<Self> + Debug + Display + Send + Sync + 'static
{
}

/// Shorthand for converting an `f64` constant into the working scalar.
///
/// Panics only if the target type cannot represent ordinary finite values,
/// which no `Real` implementor of interest does.
#[inline]
pub(crate) fn cast<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("finite constant must be representable")
}

/// π in the working scalar.
#[inline]
pub(crate) fn pi<F: Real>() -> F {
    cast(std::f64::consts::PI)
}

/// 2π in the working scalar.
#[inline]
pub(crate) fn two_pi<F: Real>() -> F {
    cast(std::f64::consts::TAU)
}
