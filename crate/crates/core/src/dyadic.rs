//! Exact dyadic rationals `num / 2^exp`, used for sample times so that
//! membership and sums never depend on floating-point rounding.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent accepted; keeps every value exactly representable.
pub const MAX_EXP: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Dyadic {
    num: i64,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };

    pub fn new(num: i64, exp: u32) -> Result<Self> {
        if exp > MAX_EXP {
            return Err(Error::InvalidInput(format!("dyadic exponent {exp} exceeds {MAX_EXP}")));
        }
        if num.unsigned_abs() >= 1u64 << 53 {
            return Err(Error::InvalidInput(format!("dyadic numerator {num} is too large")));
        }
        Ok(Dyadic { num, exp }.normalized())
    }

    pub fn integer(n: i64) -> Result<Self> {
        Self::new(n, 0)
    }

    fn normalized(mut self) -> Self {
        if self.num == 0 {
            self.exp = 0;
        }
        while self.exp > 0 && self.num % 2 == 0 {
            self.num /= 2;
            self.exp -= 1;
        }
        self
    }

    /// The exact dyadic equal to `x`, if there is one within the limits.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        for exp in 0..=MAX_EXP {
            let scaled = x * (1u64 << exp) as f64;
            if scaled.fract() == 0.0 && scaled.abs() < (1u64 << 53) as f64 {
                return Some(Dyadic { num: scaled as i64, exp }.normalized());
            }
        }
        None
    }

    /// Nearest dyadic with exponent at most `exp` (ties away from zero).
    pub fn round_to(x: f64, exp: u32) -> Result<Self> {
        let scaled = (x * (1u64 << exp.min(MAX_EXP)) as f64).round();
        if !scaled.is_finite() {
            return Err(Error::InvalidInput(format!("cannot round {x} to a dyadic")));
        }
        Self::new(scaled as i64, exp)
    }

    pub fn numerator(self) -> i64 {
        self.num
    }

    pub fn exponent(self) -> u32 {
        self.exp
    }

    pub fn value(self) -> f64 {
        self.num as f64 / (1u64 << self.exp) as f64
    }

    /// Whether this is `k / 2^depth` for an integer `k`.
    pub fn at_depth(self, depth: u32) -> bool {
        self.exp <= depth
    }

    /// The integer `k` with `self = k / 2^depth`.
    pub fn index_at(self, depth: u32) -> Option<i64> {
        if !self.at_depth(depth) {
            return None;
        }
        self.num.checked_mul(1i64 << (depth - self.exp))
    }

    pub fn checked_add(self, other: Dyadic) -> Option<Dyadic> {
        let exp = self.exp.max(other.exp);
        let a = self.num.checked_mul(1i64 << (exp - self.exp))?;
        let b = other.num.checked_mul(1i64 << (exp - other.exp))?;
        Dyadic::new(a.checked_add(b)?, exp).ok()
    }

    pub fn checked_sub(self, other: Dyadic) -> Option<Dyadic> {
        self.checked_add(Dyadic {
            num: -other.num,
            exp: other.exp,
        })
    }

    /// `self / 2^k`.
    pub fn halve(self, k: u32) -> Result<Dyadic> {
        Dyadic::new(self.num, self.exp + k)
    }

    pub fn is_positive(self) -> bool {
        self.num > 0
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let exp = self.exp.max(other.exp);
        let a = self.num as i128 * (1i128 << (exp - self.exp));
        let b = other.num as i128 * (1i128 << (exp - other.exp));
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl From<Dyadic> for f64 {
    fn from(d: Dyadic) -> f64 {
        d.value()
    }
}

impl TryFrom<f64> for Dyadic {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        Dyadic::from_f64(x).ok_or_else(|| Error::InvalidInput(format!("{x} is not a dyadic rational")))
    }
}

impl FromStr for Dyadic {
    type Err = Error;

    /// Accepts `num/2^exp`, `num/den` with a power-of-two `den`, or a
    /// decimal that is exactly dyadic.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidInput(format!("`{s}` is not a dyadic rational"));
        if let Some((n, d)) = s.split_once('/') {
            let num: i64 = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim();
            let exp = if let Some(e) = d.strip_prefix("2^") {
                e.parse().map_err(|_| bad())?
            } else {
                let den: u64 = d.parse().map_err(|_| bad())?;
                if !den.is_power_of_two() {
                    return Err(bad());
                }
                den.trailing_zeros()
            };
            return Dyadic::new(num, exp);
        }
        let x: f64 = s.parse().map_err(|_| bad())?;
        Dyadic::try_from(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_and_prints() {
        let d = Dyadic::new(6, 3).unwrap();
        assert_eq!((d.numerator(), d.exponent()), (3, 2));
        assert_eq!(d.to_string(), "3/2^2");
        assert_eq!(Dyadic::new(8, 2).unwrap().to_string(), "2");
        assert_eq!(Dyadic::new(0, 9).unwrap(), Dyadic::ZERO);
    }

    #[test]
    fn parses() {
        assert_eq!("3/8".parse::<Dyadic>().unwrap(), Dyadic::new(3, 3).unwrap());
        assert_eq!("5/2^4".parse::<Dyadic>().unwrap().value(), 5.0 / 16.0);
        assert_eq!("0.375".parse::<Dyadic>().unwrap(), Dyadic::new(3, 3).unwrap());
        assert!("1/3".parse::<Dyadic>().is_err());
        assert!("0.1".parse::<Dyadic>().is_err());
    }

    #[test]
    fn depth_membership() {
        let d = Dyadic::new(3, 2).unwrap();
        assert!(d.at_depth(2) && d.at_depth(14) && !d.at_depth(1));
        assert_eq!(d.index_at(4), Some(12));
        assert_eq!(Dyadic::from_f64(1.0 / 3.0), None);
        assert_eq!(Dyadic::round_to(1.0 / 3.0, 4).unwrap(), Dyadic::new(5, 4).unwrap());
    }

    proptest! {
        #[test]
        fn arithmetic_is_exact(a in -1_000_000i64..1_000_000, ea in 0u32..20, b in -1_000_000i64..1_000_000, eb in 0u32..20) {
            let x = Dyadic::new(a, ea).unwrap();
            let y = Dyadic::new(b, eb).unwrap();
            let s = x.checked_add(y).unwrap();
            prop_assert_eq!(s.value(), x.value() + y.value());
            prop_assert_eq!(s.checked_sub(y).unwrap(), x);
            prop_assert_eq!(x.cmp(&y), x.value().partial_cmp(&y.value()).unwrap());
            prop_assert_eq!(Dyadic::from_f64(x.value()).unwrap(), x);
        }
    }
}
