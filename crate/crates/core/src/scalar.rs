//! Arithmetic modes.
//!
//! Every algorithm in the crate is generic over [`Scalar`], which is
//! implemented for [`Rational`] (exact, used as the oracle mode) and for
//! `f64` (production mode). Code that needs to compare against zero goes
//! through [`Scalar::is_negligible`], which is exact for rationals and uses a
//! small absolute tolerance for floats.

use std::fmt::{self, Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational number backed by arbitrary precision integers.
pub type Rational = BigRational;

/// Which arithmetic an operation ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float,
}

impl Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Rational => f.write_str("rational"),
            Mode::Float => f.write_str("float"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(Mode::Rational),
            "float" => Ok(Mode::Float),
            other => Err(Error::Parse(format!("unknown arithmetic mode `{other}`"))),
        }
    }
}

/// Number type the lattice algorithms run on.
pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
{
    const MODE: Mode;

    fn from_int(n: i64) -> Self;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Self::from_int(numer) / Self::from_int(denom)
    }

    /// Exact conversion for rationals (every finite `f64` is a dyadic
    /// rational); `None` for non-finite input.
    fn from_f64(x: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    fn abs(&self) -> Self;

    /// Absolute tolerance below which a quantity counts as zero.
    /// Zero in rational mode.
    fn epsilon() -> Self;

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::epsilon()
    }

    /// Parse `p/q`, an integer, or a decimal string.
    fn parse_str(s: &str) -> Result<Self>;

    /// Serialize so that [`Scalar::parse_str`] reproduces the value exactly.
    fn to_text(&self) -> String;

    /// `1/sqrt(n)`, when representable in this mode.
    fn recip_sqrt(n: u64) -> Option<Self>;

    /// Largest integer not above `self`.
    fn floor_int(&self) -> i64;

    /// Snap probabilities that are within rounding distance of 0 or 1.
    fn clamp_unit(self) -> Self {
        if self <= Self::zero() {
            Self::zero()
        } else if self >= Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

/// Clamping band for float probabilities near 0 or 1.
pub const FLOAT_PROB_CLAMP: f64 = 1e-13;

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn epsilon() -> Self {
        1e-14
    }

    fn parse_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: f64 = p.trim().parse().map_err(|_| bad_number(s))?;
            let q: f64 = q.trim().parse().map_err(|_| bad_number(s))?;
            if q == 0.0 {
                return Err(bad_number(s));
            }
            return Ok(p / q);
        }
        let v: f64 = s.parse().map_err(|_| bad_number(s))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad_number(s))
        }
    }

    fn to_text(&self) -> String {
        // `Display` for f64 prints the shortest string that round-trips.
        format!("{self}")
    }

    fn recip_sqrt(n: u64) -> Option<Self> {
        (n > 0).then(|| 1.0 / (n as f64).sqrt())
    }

    fn floor_int(&self) -> i64 {
        self.floor() as i64
    }

    fn clamp_unit(self) -> Self {
        if self <= FLOAT_PROB_CLAMP {
            0.0
        } else if self >= 1.0 - FLOAT_PROB_CLAMP {
            1.0
        } else {
            self
        }
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;

    fn from_int(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Rational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn from_f64(x: f64) -> Option<Self> {
        Rational::from_float(x)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn epsilon() -> Self {
        Rational::zero()
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }

    fn parse_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad_number(s))?;
            let q: BigInt = q.trim().parse().map_err(|_| bad_number(s))?;
            if q.is_zero() {
                return Err(bad_number(s));
            }
            return Ok(Rational::new(p, q));
        }
        parse_decimal(s).ok_or_else(|| bad_number(s))
    }

    fn to_text(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn recip_sqrt(n: u64) -> Option<Self> {
        let root = n.isqrt();
        (n > 0 && root * root == n).then(|| Rational::new(BigInt::one(), BigInt::from(root)))
    }

    fn floor_int(&self) -> i64 {
        self.floor().to_integer().to_i64().expect("site index fits in i64")
    }

    fn clamp_unit(self) -> Self {
        self
    }
}

/// Exact rational value of a decimal literal such as `-1.25e-3`.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let all: BigInt = format!("{int_part}{frac_part}0").parse().ok()?;
    let all = all / BigInt::from(10);
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        value = -value;
    }
    Some(value)
}

fn bad_number(s: &str) -> Error {
    Error::Parse(format!("invalid number `{s}`"))
}
