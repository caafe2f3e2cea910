//! Scalar abstraction for exact sums.
//!
//! The oracle works over any [`Scalar`]: `f32` and `f64` use compensated
//! (Neumaier) summation in a fixed index order, while the rational types are
//! exact and sum naively.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync
{
    /// Sum `terms` in iteration order.
    fn sum_ordered<I: IntoIterator<Item = Self>>(terms: I) -> Self;

    /// Absolute tolerance used when checking that a weight vector is normalized.
    fn normalization_tolerance() -> Self;

    /// `numer / denom`, exact for rational scalars.
    fn ratio(numer: i64, denom: i64) -> Self;

    fn from_outcome(value: i8) -> Self {
        Self::from_i8(value).expect("outcome fits every scalar")
    }
}

macro_rules! float_scalar {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            fn sum_ordered<I: IntoIterator<Item = Self>>(terms: I) -> Self {
                let mut sum: $t = 0.0;
                let mut compensation: $t = 0.0;
                for x in terms {
                    let t = sum + x;
                    if sum.abs() >= x.abs() {
                        compensation += (sum - t) + x;
                    } else {
                        compensation += (x - t) + sum;
                    }
                    sum = t;
                }
                sum + compensation
            }

            fn normalization_tolerance() -> Self {
                $tol
            }

            fn ratio(numer: i64, denom: i64) -> Self {
                numer as $t / denom as $t
            }
        }
    };
}

float_scalar!(f32, 1e-6);
float_scalar!(f64, 1e-12);

impl Scalar for Rational64 {
    fn sum_ordered<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn normalization_tolerance() -> Self {
        Self::zero()
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        Rational64::new(numer, denom)
    }
}

impl Scalar for BigRational {
    fn sum_ordered<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn normalization_tolerance() -> Self {
        Self::zero()
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }
}

/// True when `weights` are non-negative and sum to one within the scalar's tolerance.
pub fn is_normalized<S: Scalar>(weights: &[S]) -> bool {
    if weights.iter().any(|w| w.is_negative()) {
        return false;
    }
    let total = S::sum_ordered(weights.iter().cloned());
    (total - S::one()).abs() <= S::normalization_tolerance()
}
