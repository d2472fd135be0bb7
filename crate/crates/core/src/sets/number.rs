//! Spec numbers: exact rationals when written as strings ("1/3", "0.25"),
//! binary floats otherwise.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use serde::Deserialize;

pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawNumber")]
pub struct Number {
    value: f64,
    exact: Option<Rational>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Int(i64),
    Float(f64),
    Text(String),
}

impl TryFrom<RawNumber> for Number {
    type Error = String;

    fn try_from(raw: RawNumber) -> Result<Self, String> {
        match raw {
            RawNumber::Int(i) => Ok(Number::from_ratio(Rational::from_integer(i as i128))),
            RawNumber::Float(f) if f.is_finite() => Ok(Number::from_f64(f)),
            RawNumber::Float(f) => Err(format!("non-finite number {f}")),
            RawNumber::Text(s) => s.parse(),
        }
    }
}

impl std::str::FromStr for Number {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_rational(s.trim())
            .map(Number::from_ratio)
            .ok_or_else(|| format!("cannot parse {s:?} as an exact number (use \"p/q\" or a decimal)"))
    }
}

fn parse_rational(s: &str) -> Option<Rational> {
    if let Some((p, q)) = s.split_once('/') {
        let p: i128 = p.trim().parse().ok()?;
        let q: i128 = q.trim().parse().ok()?;
        return (q != 0).then(|| Rational::new(p, q));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !(int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: i128 = digits.parse().ok()?;
    let den = 10i128.checked_pow(frac.len() as u32)?;
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

impl Number {
    pub fn from_f64(value: f64) -> Self {
        Number { value, exact: None }
    }

    pub fn from_ratio(r: Rational) -> Self {
        Number { value: ToPrimitive::to_f64(&r).unwrap_or(f64::NAN), exact: Some(r) }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Rational> {
        self.exact
    }

    /// The value as a positive integer, if it is one exactly.
    pub fn as_positive_integer(&self) -> Option<u32> {
        match self.exact {
            Some(r) if r.is_integer() && r.is_positive() => u32::try_from(r.to_integer()).ok(),
            Some(_) => None,
            None if self.value.fract() == 0.0 && self.value >= 1.0 && self.value <= u32::MAX as f64 => {
                Some(self.value as u32)
            }
            None => None,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) => write!(f, "{r}"),
            None => write!(f, "{}", self.value),
        }
    }
}

/// Arithmetic used by the subdivision oracles. Exact implementations report
/// overflow by returning `None`.
pub trait Scalar: Clone + PartialOrd + fmt::Debug {
    fn of(n: &Number) -> Option<Self>;
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, o: &Self) -> Option<Self>;
    fn sub(&self, o: &Self) -> Option<Self>;
    fn mul(&self, o: &Self) -> Option<Self>;
    /// `k * 2^-n`.
    fn dyadic(k: u128, n: u32) -> Option<Self>;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn of(n: &Number) -> Option<Self> {
        Some(n.value())
    }
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn sub(&self, o: &Self) -> Option<Self> {
        Some(self - o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn dyadic(k: u128, n: u32) -> Option<Self> {
        Some(k as f64 * (-(n as f64)).exp2())
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rational {
    fn of(n: &Number) -> Option<Self> {
        n.exact()
    }
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn add(&self, o: &Self) -> Option<Self> {
        self.checked_add(o)
    }
    fn sub(&self, o: &Self) -> Option<Self> {
        self.checked_sub(o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        self.checked_mul(o)
    }
    fn dyadic(k: u128, n: u32) -> Option<Self> {
        let den = 1i128.checked_shl(n).filter(|_| n < 127)?;
        Some(Rational::new(i128::try_from(k).ok()?, den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

pub(crate) fn cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_forms() {
        assert_eq!("1/3".parse::<Number>().unwrap().exact(), Some(Rational::new(1, 3)));
        assert_eq!("0.25".parse::<Number>().unwrap().exact(), Some(Rational::new(1, 4)));
        assert_eq!("-2".parse::<Number>().unwrap().exact(), Some(Rational::from_integer(-2)));
        assert_eq!(".5".parse::<Number>().unwrap().value(), 0.5);
        assert!("1/0".parse::<Number>().is_err());
        assert!("abc".parse::<Number>().is_err());
        assert!("1e-3".parse::<Number>().is_err());
    }

    #[test]
    fn integer_detection() {
        assert_eq!("2".parse::<Number>().unwrap().as_positive_integer(), Some(2));
        assert_eq!(Number::from_f64(1.0).as_positive_integer(), Some(1));
        assert_eq!(Number::from_f64(1.5).as_positive_integer(), None);
        assert_eq!("3/2".parse::<Number>().unwrap().as_positive_integer(), None);
    }

    #[test]
    fn rational_overflow_is_reported() {
        let big = Rational::new(1, i128::MAX / 3);
        assert!(big.mul(&big).is_none());
        assert_eq!(Rational::dyadic(3, 2), Some(Rational::new(3, 4)));
    }
}
