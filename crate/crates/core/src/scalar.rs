//! Scalar abstraction for the numeric pipeline.
//!
//! Everything numeric in this crate is generic over [`Real`] so the same code
//! runs in `f32` or `f64`. The persisted file formats are always float64
//! little-endian, and the crate root exports f64-backed aliases for the types
//! the CLI toolchain uses.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the pipeline.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for pulling an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant must convert into the scalar type")
}
