use std::fmt;

use num_traits::{Float, NumCast, ToPrimitive};

/// Floating-point scalar the numeric core is generic over.
///
/// The shipped pipeline (training, checkpoints, reports) runs entirely in
/// `f64`; see the type aliases at the crate root. `f32` is supported for
/// experimentation at reduced precision.
pub trait Scalar: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Convert an `f64` constant or config value into the scalar type.
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 value representable as scalar")
    }

    /// Widen to `f64` for reports and file formats.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
