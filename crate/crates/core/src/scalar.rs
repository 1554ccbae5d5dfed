//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the tabular machinery is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
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
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Tolerance for "sums to one" checks over `len` terms.
    fn simplex_tolerance(len: usize) -> Self {
        let eps = Self::epsilon() * Self::lit(4.0 * len.max(1) as f64);
        eps.max(Self::lit(1e-12))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Largest entry of a non-empty slice.
pub(crate) fn max_of<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().fold(S::neg_infinity(), S::max)
}

/// Smallest entry of a non-empty slice.
pub(crate) fn min_of<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().fold(S::infinity(), S::min)
}

pub(crate) fn mean_of<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().sum::<S>() / S::lit(xs.len() as f64)
}
