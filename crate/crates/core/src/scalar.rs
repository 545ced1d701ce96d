//! Scalar abstraction shared by every calibration routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the calibration math is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` literals.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
