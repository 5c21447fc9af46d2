//! Scalar abstraction shared by the geometry, grid and codec code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
///
/// Geometry and grids are usually instantiated with `f64`; the codec trains in
/// `f32` and runs its gradient checks in `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// Tolerance used for unit-norm checks, scaled to the type's precision.
    #[inline]
    fn unit_tolerance() -> Self {
        let tight = Self::lit(1e-9);
        let eps = Self::epsilon() * Self::lit(16.0);
        if eps > tight {
            eps
        } else {
            tight
        }
    }

    /// Lossy conversion between scalar types.
    #[inline]
    fn cast<U: Real>(self) -> U {
        U::lit(self.as_f64())
    }
}

impl Real for f32 {}
impl Real for f64 {}
