//! Scalar modes: binary floats and exact arbitrary-precision rationals.
//!
//! Every algebraic object in the crate is generic over [`Scalar`], so a
//! `KVector<f64>` and a `KVector<Rational>` can never be combined by accident.

use std::fmt::Display;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Rational = BigRational;

pub trait Scalar:
    nalgebra::Scalar
    + num_traits::Num
    + Signed
    + PartialOrd
    + Display
    + Send
    + Sync
    + for<'a> std::ops::AddAssign<&'a Self>
    + for<'a> std::ops::SubAssign<&'a Self>
{
    /// `true` for exact arithmetic.
    const EXACT: bool;

    /// Pivot threshold for elimination and simplex ratio tests.
    fn pivot_eps() -> Self;

    fn from_f64(x: f64) -> Self;

    fn from_i64(x: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// Zero test used by elimination; exact in rational mode.
    fn is_negligible(&self) -> bool {
        self.abs() <= Self::pivot_eps()
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn pivot_eps() -> Self {
        1e-11
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn from_i64(x: i64) -> Self {
        x as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn pivot_eps() -> Self {
        Rational::zero()
    }

    /// Exact conversion: every finite `f64` is a dyadic rational.
    fn from_f64(x: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(x).expect("finite float")
    }

    fn from_i64(x: i64) -> Self {
        Rational::from_integer(BigInt::from(x))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // numerator/denominator too large for direct conversion
            let n = self.numer().bits() as i64;
            let d = self.denom().bits() as i64;
            let shift = (n.max(d) - 900).max(0) as usize;
            let num = (self.numer() >> shift).to_f64().unwrap_or(0.0);
            let den = (self.denom() >> shift).to_f64().unwrap_or(1.0);
            num / den
        })
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

/// Parses `"p/q"`, `"p"` or a decimal float literal into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    if let Ok(i) = s.parse::<BigInt>() {
        return Some(Rational::from_integer(i));
    }
    let f: f64 = s.parse().ok()?;
    f.is_finite().then(|| <Rational as Scalar>::from_f64(f))
}

/// Formats a rational as `"p/q"` (or `"p"` when integral).
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serde helpers for rationals stored as `"p/q"` strings.
pub mod serde_rational {
    use super::{format_rational, parse_rational, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = String::deserialize(d)?;
        parse_rational(&raw).ok_or_else(|| D::Error::custom(format!("bad rational {raw:?}")))
    }

    pub mod vec {
        use super::super::{format_rational, parse_rational, Rational};
        use serde::{de::Error, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(format_rational))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let raw = Vec::<String>::deserialize(d)?;
            raw.iter()
                .map(|x| parse_rational(x).ok_or_else(|| D::Error::custom(format!("bad rational {x:?}"))))
                .collect()
        }
    }
}
