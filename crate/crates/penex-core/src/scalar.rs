//! Scalar abstraction for the numeric kernels.
//!
//! Tensor, loss, metric, and controller code is generic over [`Scalar`] so
//! the same kernels run in `f32` or `f64`. Verification oracles pin `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every numeric kernel in this crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Default + 'static
{
    /// Lossy conversion from `f64`, used for constants and ingested data.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any supported scalar")
    }

    /// Widening conversion to `f64`, used for reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("supported scalars convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
