//! Scalar abstraction over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type for masks, features, decoder parameters,
/// and geometry. `f32` matches the on-disk tensor format and is fast
/// enough for training; `f64` backs gradient checks and metrics.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Dtype code used by the tensor file format.
    const DTYPE_CODE: u32;

    /// Shorthand conversion from an `f64` constant.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }

    /// Lossless-or-rounding conversion back to `f64`.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const DTYPE_CODE: u32 = 0;
}

impl Scalar for f64 {
    const DTYPE_CODE: u32 = 1;
}
