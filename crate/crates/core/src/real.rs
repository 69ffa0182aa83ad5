//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, panicking only if the target type cannot represent it at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Maps an angle into `[0, 2π)`.
    fn wrap_phase(self) -> Self {
        let two_pi = Self::TAU();
        let mut r = self % two_pi;
        if r < Self::zero() {
            r += two_pi;
        }
        // `x % 2π` can round up to exactly 2π for tiny negative inputs.
        if r >= two_pi {
            r -= two_pi;
        }
        r
    }

    /// Maps an angle into `(-π, π]`.
    fn wrap_signed(self) -> Self {
        let pi = Self::PI();
        let r = self.wrap_phase();
        if r > pi {
            r - Self::TAU()
        } else {
            r
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
