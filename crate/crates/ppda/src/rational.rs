//! Exact non-negative rational arithmetic.
//!
//! Every probability and weight in this crate is a [`Rational`]: an
//! arbitrary-precision fraction kept in lowest terms. There is no floating
//! point anywhere in the library; comparisons are exact.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// An exact non-negative rational number.
///
/// Stored in lowest terms with a positive denominator. Supports parsing from
/// integer (`3`), fraction (`7/10`) and decimal (`0.7`) literals; decimals are
/// converted exactly.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationalParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("negative values are not allowed: `{0}`")]
    Negative(String),
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

impl Rational {
    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// Builds `num/den`. Panics if `den` is zero; use [`Rational::from_str`]
    /// for fallible construction from text.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_integer(n: u64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Exact subtraction; `None` if the result would be negative.
    pub fn checked_sub(&self, other: &Rational) -> Option<Rational> {
        if self.0 < other.0 {
            None
        } else {
            Some(Rational(&self.0 - &other.0))
        }
    }
}

impl Add<&Rational> for &Rational {
    type Output = Rational;
    fn add(self, rhs: &Rational) -> Rational {
        Rational(&self.0 + &rhs.0)
    }
}

impl Sub<&Rational> for &Rational {
    type Output = Rational;
    fn sub(self, rhs: &Rational) -> Rational {
        let r = &self.0 - &rhs.0;
        assert!(!r.is_negative(), "rational subtraction went negative");
        Rational(r)
    }
}

impl Mul<&Rational> for &Rational {
    type Output = Rational;
    fn mul(self, rhs: &Rational) -> Rational {
        Rational(&self.0 * &rhs.0)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = RationalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(RationalParseError::Empty);
        }
        if s.starts_with('-') {
            return Err(RationalParseError::Negative(s.to_string()));
        }
        let malformed = || RationalParseError::Malformed(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let num: BigInt = n.trim().parse().map_err(|_| malformed())?;
            let den: BigInt = d.trim().parse().map_err(|_| malformed())?;
            if num.is_negative() || den.is_negative() {
                return Err(RationalParseError::Negative(s.to_string()));
            }
            if den.is_zero() {
                return Err(RationalParseError::ZeroDenominator(s.to_string()));
            }
            return Ok(Rational(BigRational::new(num, den)));
        }
        if let Some((int_part, frac_part)) = s.split_once('.') {
            // Exact decimal: 0.25 -> 25/100 -> 1/4.
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let int_part = if int_part.is_empty() { "0" } else { int_part };
            if !int_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let digits: BigInt = format!("{int_part}{frac_part}").parse().map_err(|_| malformed())?;
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            return Ok(Rational(BigRational::new(digits, scale)));
        }
        if !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let num: BigInt = s.parse().map_err(|_| malformed())?;
        Ok(Rational(BigRational::from_integer(num)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!("1/2".parse::<Rational>().unwrap(), Rational::new(1, 2));
        assert_eq!("3".parse::<Rational>().unwrap(), Rational::from_integer(3));
        assert_eq!("0.5".parse::<Rational>().unwrap(), Rational::new(1, 2));
        assert_eq!("0.3".parse::<Rational>().unwrap(), Rational::new(3, 10));
        assert_eq!(".25".parse::<Rational>().unwrap(), Rational::new(1, 4));
        assert_eq!("5/10".parse::<Rational>().unwrap(), Rational::new(1, 2));
    }

    #[test]
    fn rejects_bad_literals() {
        assert!("".parse::<Rational>().is_err());
        assert!("-1/2".parse::<Rational>().is_err());
        assert!("1/0".parse::<Rational>().is_err());
        assert!("1.2.3".parse::<Rational>().is_err());
        assert!("x".parse::<Rational>().is_err());
        assert!("1e3".parse::<Rational>().is_err());
    }

    #[test]
    fn renders_in_lowest_terms() {
        assert_eq!(Rational::new(5, 10).to_string(), "1/2");
        assert_eq!(Rational::new(4, 2).to_string(), "2");
        assert_eq!(Rational::zero().to_string(), "0");
    }

    #[test]
    fn checked_sub_guards_negativity() {
        let half = Rational::new(1, 2);
        let third = Rational::new(1, 3);
        assert_eq!(half.checked_sub(&third), Some(Rational::new(1, 6)));
        assert_eq!(third.checked_sub(&half), None);
    }
}
