//! Scalar abstraction shared by the exact-rational and floating-point
//! polytope pipelines.
//!
//! All lattice data (facet normals, multiplicities) is integer regardless of
//! the scalar; only support numbers, intercepts and derived volumes carry the
//! scalar type. Intersection numbers computed over [`Rational`] are exact;
//! the `f64` instance takes a tolerance band on every sign decision.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is exact and sign tolerances are ignored.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn to_f64(&self) -> f64;

    /// Sign of the value, treating `|v| <= tol` as zero for inexact scalars.
    fn sign(&self, tol: f64) -> Ordering;

    fn abs(&self) -> Self;

    fn is_positive_tol(&self, tol: f64) -> bool {
        self.sign(tol) == Ordering::Greater
    }

    fn is_negative_tol(&self, tol: f64) -> bool {
        self.sign(tol) == Ordering::Less
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

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <Rational as Zero>::zero()
    }

    fn one() -> Self {
        <Rational as num_traits::One>::one()
    }

    fn from_int(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn sign(&self, _tol: f64) -> Ordering {
        if self.is_zero() {
            Ordering::Equal
        } else if Signed::is_positive(self) {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sign(&self, tol: f64) -> Ordering {
        if f64::abs(*self) <= tol {
            Ordering::Equal
        } else if *self > 0.0 {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

/// Parse a rational written as `p/q`, `p`, or `-p/q`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let p = BigInt::from_str(num.trim())
            .map_err(|_| Error::Validation(format!("invalid rational numerator {num:?}")))?;
        let q = BigInt::from_str(den.trim())
            .map_err(|_| Error::Validation(format!("invalid rational denominator {den:?}")))?;
        if q.is_zero() {
            return Err(Error::Validation(format!("zero denominator in {s:?}")));
        }
        Ok(Rational::new(p, q))
    } else {
        let p = BigInt::from_str(s)
            .map_err(|_| Error::Validation(format!("invalid rational {s:?}")))?;
        Ok(Rational::from_integer(p))
    }
}

/// A support number or intercept as it appears in JSON: exact when given as
/// a string rational or an integer, floating otherwise.
#[derive(Debug, Clone)]
pub enum NumberInput {
    Exact(Rational),
    Inexact(f64),
}

impl NumberInput {
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => Ok(NumberInput::Exact(parse_rational(s)?)),
            serde_json::Value::Number(num) => {
                if let Some(i) = num.as_i64() {
                    Ok(NumberInput::Exact(Rational::from_integer(BigInt::from(i))))
                } else {
                    let f = num
                        .as_f64()
                        .ok_or_else(|| Error::Validation(format!("invalid number {num}")))?;
                    Ok(NumberInput::Inexact(f))
                }
            }
            other => Err(Error::Validation(format!(
                "expected a number or \"p/q\" string, got {other}"
            ))),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, NumberInput::Exact(_))
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            NumberInput::Exact(r) => Some(r.clone()),
            NumberInput::Inexact(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            NumberInput::Exact(r) => Scalar::to_f64(r),
            NumberInput::Inexact(f) => *f,
        }
    }
}
