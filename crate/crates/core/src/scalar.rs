//! Coordinate scalar abstraction.
//!
//! Geometry, ingest and synthesis are generic over the coordinate type so the
//! same pipeline runs on `f32` (compact detection dumps) and `f64` (default).
//! Predicates are evaluated exactly on the `f64` image of each coordinate,
//! which is lossless for both supported types.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point coordinate type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossless widening used by the exact predicates and by serialization.
    fn to_f64_exact(self) -> f64;

    /// Narrowing conversion from `f64`, rounding to nearest.
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn to_f64_exact(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64_exact(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
