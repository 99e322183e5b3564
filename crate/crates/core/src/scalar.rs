//! Numeric abstraction used by the scoring layer.
//!
//! Satisfaction functions and the trade-off score only need field
//! arithmetic and an ordering, so they are written once over [`Scalar`]
//! and instantiated for `f32`, `f64` and exact rationals (`Ratio<i64>`).
//! The rational instance is what the algebra tests use to check the
//! weighted sum without rounding.

use num_rational::Ratio;
use num_traits::Num;
use std::fmt::Debug;

pub trait Scalar: Num + Copy + PartialOrd + Debug {
    /// Slack accepted when checking that two weights sum to one.
    fn weight_tolerance() -> Self;

    fn from_count(n: u64) -> Self;

    fn to_f64(self) -> f64;

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn weight_tolerance() -> Self {
        1e-9
    }

    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn weight_tolerance() -> Self {
        1e-6
    }

    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for Ratio<i64> {
    fn weight_tolerance() -> Self {
        Ratio::new(0, 1)
    }

    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits in i64"))
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_unit_bounds() {
        assert_eq!((-0.5f64).clamp_unit(), 0.0);
        assert_eq!(1.5f64.clamp_unit(), 1.0);
        assert_eq!(Ratio::new(3i64, 4).clamp_unit(), Ratio::new(3, 4));
        assert_eq!(Ratio::new(5i64, 4).clamp_unit(), Ratio::from_integer(1));
    }

    #[test]
    fn rational_to_f64() {
        assert_eq!(Ratio::new(1i64, 4).to_f64(), 0.25);
        assert_eq!(<Ratio<i64> as Scalar>::from_count(7), Ratio::from_integer(7));
    }
}
