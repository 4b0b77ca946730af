//! Scalar abstractions shared by the arithmetic and statistics code.
//!
//! Explanation search evaluates expressions over any [`Scalar`]: the engine
//! uses exact rationals so that a division producing a fraction stays a
//! fraction, while test oracles can evaluate the same trees with big
//! rationals or floats. Regression code is generic over [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Float, FromPrimitive, Zero};

/// Number type an arithmetic expression can be evaluated in.
///
/// Every operation is checked: overflow or division by zero yields `None`,
/// which prunes the branch during search.
pub trait Scalar: Clone + PartialEq + Debug {
    fn from_int(v: i64) -> Self;
    fn try_add(&self, rhs: &Self) -> Option<Self>;
    fn try_sub(&self, rhs: &Self) -> Option<Self>;
    fn try_mul(&self, rhs: &Self) -> Option<Self>;
    fn try_div(&self, rhs: &Self) -> Option<Self>;
}

impl<T> Scalar for Ratio<T>
where
    T: Clone + Integer + CheckedAdd + CheckedSub + CheckedMul + FromPrimitive + Debug,
{
    fn from_int(v: i64) -> Self {
        Ratio::from_integer(T::from_i64(v).expect("integer fits the rational base type"))
    }

    fn try_add(&self, rhs: &Self) -> Option<Self> {
        self.checked_add(rhs)
    }

    fn try_sub(&self, rhs: &Self) -> Option<Self> {
        self.checked_sub(rhs)
    }

    fn try_mul(&self, rhs: &Self) -> Option<Self> {
        self.checked_mul(rhs)
    }

    fn try_div(&self, rhs: &Self) -> Option<Self> {
        if rhs.is_zero() {
            return None;
        }
        self.checked_div(rhs)
    }
}

impl Scalar for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn try_add(&self, rhs: &Self) -> Option<Self> {
        finite(self + rhs)
    }

    fn try_sub(&self, rhs: &Self) -> Option<Self> {
        finite(self - rhs)
    }

    fn try_mul(&self, rhs: &Self) -> Option<Self> {
        finite(self * rhs)
    }

    fn try_div(&self, rhs: &Self) -> Option<Self> {
        if *rhs == 0.0 {
            None
        } else {
            finite(self / rhs)
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Floating-point type used by the regression engine.
pub trait Real: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {
    /// Lossy conversion from `f64` constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {}
