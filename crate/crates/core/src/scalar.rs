//! Scalar abstractions shared by the generic numeric modules.

use std::fmt::Debug;
use std::iter::Sum;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Sum + Send + Sync + 'static {
    /// Shorthand for lossless-enough literal conversion.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used by the simplex solver. Implemented for the float types
/// (with a small pivot tolerance) and for exact rationals (tolerance zero).
pub trait LpScalar:
    Clone + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Debug + Send + Sync
{
    /// Values with magnitude at or below this are treated as zero.
    fn tolerance() -> Self;

    fn is_exact() -> bool;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer representable") / Self::from_i64(den).expect("integer representable")
    }

    fn approx_zero(&self) -> bool {
        self.abs() <= Self::tolerance()
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest integer not below `self - tolerance`.
    fn ceil_tolerant(&self) -> i64;
}

impl LpScalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
    fn is_exact() -> bool {
        false
    }
    fn ceil_tolerant(&self) -> i64 {
        (self - Self::tolerance()).ceil() as i64
    }
}

impl LpScalar for f32 {
    fn tolerance() -> Self {
        1e-4
    }
    fn is_exact() -> bool {
        false
    }
    fn ceil_tolerant(&self) -> i64 {
        (self - Self::tolerance()).ceil() as i64
    }
}

impl LpScalar for BigRational {
    fn tolerance() -> Self {
        Self::zero()
    }
    fn is_exact() -> bool {
        true
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(BigInt::from(num), BigInt::from(den))
    }
    fn ceil_tolerant(&self) -> i64 {
        self.ceil().to_integer().to_i64().expect("bin count fits in i64")
    }
}
