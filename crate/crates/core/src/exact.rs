//! Exact arithmetic carriers.
//!
//! Closed-form moments are rational whenever the standard deviation of the
//! underlying law is rational. Odd standardized moments of laws with an
//! irrational standard deviation (a centered Bernoulli(3/10), say) pick up a
//! single square root, so values are carried as `coeff * sqrt(radicand)`
//! with both parts rational.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Mul, Neg};

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arbitrary precision rational, always kept in lowest terms with a positive
/// denominator.
pub type ExactRational = BigRational;

pub fn rational(num: i64, den: i64) -> ExactRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: impl Into<BigInt>) -> ExactRational {
    BigRational::from_integer(v.into())
}

pub fn from_biguint(v: &BigUint) -> ExactRational {
    BigRational::from_integer(BigInt::from_biguint(Sign::Plus, v.clone()))
}

/// Parses `"7"`, `"-9/5"`, `"0.3"` or `"1.25e-2"` into an exact rational.
/// Decimal strings are read digit for digit, not through a float.
pub fn parse_rational(s: &str) -> Result<ExactRational> {
    let s = s.trim();
    let bad = || Error::domain(format!("cannot parse {s:?} as a rational number"));
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("0{whole}{frac}").parse().map_err(|_| bad())?;
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10u32);
    let mut value = if scale >= 0 {
        BigRational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Formats an exact rational as `p` or `p/q`.
pub fn format_rational(q: &ExactRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn to_f64(q: &ExactRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Exact square root of a nonnegative rational, when it exists.
pub fn rational_sqrt(q: &ExactRational) -> Option<ExactRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| BigRational::new(n, d))
}

/// `base^(e/2)` for a positive rational base and any integer `e`.
pub fn half_power(base: &ExactRational, half_exponent: i64) -> Radical {
    debug_assert!(base.is_positive());
    let whole = half_exponent.div_euclid(2);
    let odd = half_exponent.rem_euclid(2) == 1;
    let coeff = pow_int(base, whole);
    if odd {
        Radical::new(coeff, base.clone())
    } else {
        Radical::rational(coeff)
    }
}

pub fn pow_int(base: &ExactRational, e: i64) -> ExactRational {
    if e >= 0 {
        num_traits::pow(base.clone(), e as usize)
    } else {
        num_traits::pow(base.recip(), (-e) as usize)
    }
}

/// An exact real of the form `coeff * sqrt(radicand)`.
///
/// The radicand is a positive integer after normalization; perfect squares are
/// folded into the coefficient and a zero coefficient forces radicand 1.
#[derive(Clone, Debug)]
pub struct Radical {
    coeff: ExactRational,
    radicand: ExactRational,
}

impl Radical {
    pub fn new(coeff: ExactRational, radicand: ExactRational) -> Self {
        assert!(
            !radicand.is_negative(),
            "radicand must be nonnegative, got {radicand}"
        );
        let mut out = Radical { coeff, radicand };
        out.normalize();
        out
    }

    pub fn rational(value: ExactRational) -> Self {
        Radical {
            coeff: value,
            radicand: ExactRational::one(),
        }
    }

    pub fn zero() -> Self {
        Self::rational(ExactRational::zero())
    }

    pub fn one() -> Self {
        Self::rational(ExactRational::one())
    }

    fn normalize(&mut self) {
        if self.coeff.is_zero() || self.radicand.is_zero() {
            self.coeff = ExactRational::zero();
            self.radicand = ExactRational::one();
            return;
        }
        // sqrt(p/q) = sqrt(p q) / q
        if !self.radicand.is_integer() {
            let den = BigRational::from_integer(self.radicand.denom().clone());
            self.radicand = &self.radicand * &den * &den;
            self.coeff = &self.coeff / &den;
        }
        if let Some(root) = rational_sqrt(&self.radicand) {
            self.coeff = &self.coeff * root;
            self.radicand = ExactRational::one();
        }
    }

    pub fn coeff(&self) -> &ExactRational {
        &self.coeff
    }

    pub fn radicand(&self) -> &ExactRational {
        &self.radicand
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.radicand.is_one()
    }

    pub fn to_rational(&self) -> Option<ExactRational> {
        self.is_rational().then(|| self.coeff.clone())
    }

    pub fn signum(&self) -> i32 {
        match self.coeff.cmp(&ExactRational::zero()) {
            Ordering::Less => -1,
            Ordering::Equal => 0,
            Ordering::Greater => 1,
        }
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.coeff) * to_f64(&self.radicand).sqrt()
    }

    /// Sum of two radicals sharing a radicand (or with one side zero).
    pub fn checked_add(&self, other: &Radical) -> Option<Radical> {
        if other.is_zero() {
            return Some(self.clone());
        }
        if self.is_zero() {
            return Some(other.clone());
        }
        (self.radicand == other.radicand)
            .then(|| Radical::new(&self.coeff + &other.coeff, self.radicand.clone()))
    }

    pub fn checked_sub(&self, other: &Radical) -> Option<Radical> {
        self.checked_add(&-other.clone())
    }

    pub fn mul_rational(&self, q: &ExactRational) -> Radical {
        Radical::new(&self.coeff * q, self.radicand.clone())
    }

    /// `coeff^2 * radicand`, the exact square of the value.
    pub fn square(&self) -> ExactRational {
        &self.coeff * &self.coeff * &self.radicand
    }
}

impl PartialEq for Radical {
    fn eq(&self, other: &Self) -> bool {
        self.signum() == other.signum() && self.square() == other.square()
    }
}

impl Eq for Radical {}

impl PartialEq<ExactRational> for Radical {
    fn eq(&self, other: &ExactRational) -> bool {
        *self == Radical::rational(other.clone())
    }
}

impl Neg for Radical {
    type Output = Radical;
    fn neg(self) -> Radical {
        Radical {
            coeff: -self.coeff,
            radicand: self.radicand,
        }
    }
}

impl Mul for &Radical {
    type Output = Radical;
    fn mul(self, rhs: &Radical) -> Radical {
        Radical::new(&self.coeff * &rhs.coeff, &self.radicand * &rhs.radicand)
    }
}

impl Mul for Radical {
    type Output = Radical;
    fn mul(self, rhs: Radical) -> Radical {
        &self * &rhs
    }
}

impl fmt::Display for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            write!(f, "{}", format_rational(&self.coeff))
        } else {
            write!(
                f,
                "{}*sqrt({})",
                format_rational(&self.coeff),
                format_rational(&self.radicand)
            )
        }
    }
}

/// Serialized form: `{"exact": "...", "value": float}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub exact: String,
    pub value: f64,
}

impl From<&Radical> for ExactReport {
    fn from(r: &Radical) -> Self {
        ExactReport {
            exact: r.to_string(),
            value: r.to_f64(),
        }
    }
}

impl From<&ExactRational> for ExactReport {
    fn from(q: &ExactRational) -> Self {
        ExactReport {
            exact: format_rational(q),
            value: to_f64(q),
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}
