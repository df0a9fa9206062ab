//! Floating-point scalar abstraction.
//!
//! The numerical core is generic over the element type so the same code runs
//! in `f32` or `f64`; the crate root exports `f64` aliases, which every
//! reported result uses.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into the scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
