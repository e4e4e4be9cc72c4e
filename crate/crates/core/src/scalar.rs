//! Scalar abstraction for the numeric modules.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used by geometry and blur: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Orthonormality tolerance for rotations produced in this precision.
    fn rotation_tolerance() -> Self;

    /// Converts an `f64` literal into this precision.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal out of range")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn rotation_tolerance() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn rotation_tolerance() -> Self {
        1e-9
    }
}
