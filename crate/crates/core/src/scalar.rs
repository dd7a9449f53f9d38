//! Scalar abstraction shared by every numeric routine in the crate.

use std::iter::Sum;

use clarabel::algebra::FloatT;

/// Floating-point type the models and the conic backend are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// assume `f64`; `f32` is usable for assembly and coarse solves.
pub trait Scalar: FloatT + Sum + Copy + Send + Sync {
    /// Lossy conversion from an `f64` literal or parameter.
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite f64 fits every Scalar")
    }

    fn as_f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
