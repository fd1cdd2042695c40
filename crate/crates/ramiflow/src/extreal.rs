//! Extended nonnegative reals: finite values plus an explicit +∞.

use std::fmt;
use std::ops::{Add, Mul};

/// A nonnegative real extended with +∞.
///
/// Marginal costs `τ(w)/w` can blow up as `w → 0`, and energies that involve
/// them must carry infinity as a first-class value instead of a float
/// sentinel. Arithmetic follows measure-theoretic conventions, in particular
/// `∞ · 0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn finite(v: f64) -> Self {
        debug_assert!(v.is_finite());
        ExtReal::Finite(v)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Finite value, panicking on +∞.
    pub fn unwrap_finite(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::Infinite => panic!("unexpected infinite value"),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl Mul<f64> for ExtReal {
    type Output = ExtReal;
    fn mul(self, rhs: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a * rhs),
            ExtReal::Infinite => {
                if rhs == 0.0 {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::Infinite
                }
            }
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_times_zero_is_zero() {
        assert_eq!(ExtReal::Infinite * 0.0, ExtReal::Finite(0.0));
        assert_eq!(ExtReal::Infinite * 2.0, ExtReal::Infinite);
        assert!(ExtReal::Finite(3.0) < ExtReal::Infinite);
    }
}
