//! Scalar abstraction shared by the profile, welfare and axiom layers.
//!
//! Utilities and probabilities are normally exact [`Rational`]s so that the
//! axiom checks, which hinge on `>=` between sums, never depend on rounding.
//! The same code also runs over `f64`/`f32` for quick experiments.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number in canonical reduced form (positive denominator).
pub type Rational = BigRational;

/// Numeric type usable for utilities, probabilities and rewards.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + Send + Sync + 'static
{
    /// Converts an exact rational into this scalar (rounding for floats).
    fn from_rational(value: &Rational) -> Self;

    /// Nearest `f64`, used by the floating-point solvers.
    fn to_f64(&self) -> f64;

    /// Exact rational value, when one exists (non-finite floats have none).
    fn to_rational(&self) -> Option<Rational>;

    /// Whether arithmetic on this type is exact.
    const EXACT: bool;

    fn from_i64(value: i64) -> Self {
        Self::from_rational(&Rational::from_integer(BigInt::from(value)))
    }

    fn ratio(numer: i64, denom: i64) -> Self {
        Self::from_rational(&Rational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    /// `alpha + beta * self`.
    fn affine(&self, beta: &Self, alpha: &Self) -> Self {
        alpha.clone() + beta.clone() * self.clone()
    }

    /// Value at `self` of the line through `(x0, y0)` and `(x1, y1)`.
    fn lerp(&self, x0: &Self, y0: &Self, x1: &Self, y1: &Self) -> Self {
        y0.clone() + (self.clone() - x0.clone()) * (y1.clone() - y0.clone()) / (x1.clone() - x0.clone())
    }

    /// `self^exp`.
    fn powu(&self, exp: u32) -> Self {
        num_traits::pow(self.clone(), exp as usize)
    }

    /// `self + other`, without cloning `other` where the type allows it.
    fn add_ref(self, other: &Self) -> Self {
        self + other.clone()
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_rational(value: &Rational) -> Self {
        value.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }

    fn affine(&self, beta: &Self, alpha: &Self) -> Self {
        if self.is_integer() && beta.is_integer() && alpha.is_integer() {
            return Rational::from_integer(alpha.numer() + beta.numer() * self.numer());
        }
        // (bn*un*ad + an*bd*ud) / (bd*ud*ad), reduced once
        let (bn, bd) = (beta.numer(), beta.denom());
        let (un, ud) = (self.numer(), self.denom());
        let (an, ad) = (alpha.numer(), alpha.denom());
        let bu_d = bd * ud;
        let numer = bn * un * ad + an * &bu_d;
        Rational::new(numer, bu_d * ad)
    }

    fn lerp(&self, x0: &Self, y0: &Self, x1: &Self, y1: &Self) -> Self {
        if [self, x0, y0, x1, y1].iter().all(|v| v.is_integer()) {
            let run = x1.numer() - x0.numer();
            let numer = y0.numer() * &run + (self.numer() - x0.numer()) * (y1.numer() - y0.numer());
            return Rational::new(numer, run);
        }
        y0 + (self - x0) * (y1 - y0) / (x1 - x0)
    }

    fn powu(&self, exp: u32) -> Self {
        // a reduced fraction stays reduced under powers
        num_traits::Pow::pow(self, exp)
    }

    fn add_ref(self, other: &Self) -> Self {
        if self.is_integer() && other.is_integer() {
            return Rational::from_integer(self.numer() + other.numer());
        }
        self + other
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(value: &Rational) -> Self {
        ToPrimitive::to_f64(value).unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> Option<Rational> {
        Rational::from_float(*self)
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_rational(value: &Rational) -> Self {
        ToPrimitive::to_f32(value).unwrap_or(f32::NAN)
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn to_rational(&self) -> Option<Rational> {
        Rational::from_float(*self)
    }
}

/// Integer power by repeated squaring.
pub fn pow<S: Scalar>(base: &S, exp: u32) -> S {
    base.powu(exp)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

/// Parses `"p"`, `"p/q"` or a plain decimal such as `"-0.25"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let invalid = || ParseRationalError::Invalid(text.to_string());

    if let Some((numer, denom)) = text.split_once('/') {
        let numer = BigInt::from_str(numer.trim()).map_err(|_| invalid())?;
        let denom = BigInt::from_str(denom.trim()).map_err(|_| invalid())?;
        if denom.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(text.to_string()));
        }
        return Ok(Rational::new(numer, denom));
    }

    if let Some((whole, frac)) = text.split_once('.') {
        let negative = whole.starts_with('-');
        let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if !digits_ok(whole_digits) || !digits_ok(frac) || (whole_digits.is_empty() && frac.is_empty())
        {
            return Err(invalid());
        }
        let joined = format!("{whole_digits}{frac}");
        let magnitude = if joined.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(&joined).map_err(|_| invalid())?
        };
        let denom = num_traits::pow(BigInt::from(10), frac.len());
        let value = Rational::new(magnitude, denom);
        return Ok(if negative { -value } else { value });
    }

    BigInt::from_str(text)
        .map(Rational::from_integer)
        .map_err(|_| invalid())
}

/// Canonical text form: `"p"` for integers, `"p/q"` otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Shorthand for building exact constants in code and tests.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-4").unwrap(), rat(-4, 1));
        assert_eq!(parse_rational("0.9").unwrap(), rat(9, 10));
        assert_eq!(parse_rational("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_rational(".5").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("2/-4").unwrap(), rat(-1, 2));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(parse_rational(""), Err(ParseRationalError::Empty)));
        assert!(matches!(parse_rational("1/0"), Err(ParseRationalError::ZeroDenominator(_))));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.2.3").is_err());
        assert!(parse_rational("1e5").is_err());
    }

    #[test]
    fn canonical_form_is_reduced() {
        let r = rat(6, -4);
        assert_eq!(format_rational(&r), "-3/2");
        assert!(r.denom() > &BigInt::zero());
        assert_eq!(format_rational(&rat(10, 5)), "2");
    }

    #[test]
    fn float_conversion() {
        assert_eq!(<f64 as Scalar>::from_rational(&rat(1, 4)), 0.25);
        assert_eq!(<f32 as Scalar>::ratio(3, 2), 1.5f32);
        assert_eq!(Scalar::to_f64(&rat(9, 10)), 0.9);
    }

    proptest! {
        #[test]
        fn addition_is_exact(a in -1000i64..1000, b in 1i64..1000, c in -1000i64..1000, d in 1i64..1000) {
            let x = rat(a, b);
            let y = rat(c, d);
            prop_assert_eq!((x.clone() + y.clone()) - y, x);
        }

        #[test]
        fn format_parse_round_trip(a in -100_000i64..100_000, b in 1i64..10_000) {
            let x = rat(a, b);
            prop_assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
        }

        #[test]
        fn order_agrees_with_reals(a in -1000i64..1000, b in 1i64..1000, c in -1000i64..1000, d in 1i64..1000) {
            // cross-multiplication over integers as the reference order
            let expected = (a as i128 * d as i128).cmp(&(c as i128 * b as i128));
            prop_assert_eq!(rat(a, b).cmp(&rat(c, d)), expected);
        }

        #[test]
        fn fused_ops_match_plain_arithmetic(
            v in (-50i64..50, 1i64..4), b in (-50i64..50, 1i64..4), a in (-50i64..50, 1i64..4),
            x1 in (1i64..50, 1i64..4), y1 in (-50i64..50, 1i64..4), k in 0u32..6,
        ) {
            let [v, b, a, x1, y1] = [v, b, a, x1, y1].map(|(n, d)| rat(n, d));
            let x0 = a.clone() - x1.clone();
            prop_assert_eq!(v.affine(&b, &a), a.clone() + b.clone() * v.clone());
            prop_assert_eq!(v.clone().add_ref(&b), v.clone() + b.clone());
            prop_assert_eq!(
                v.lerp(&x0, &b, &a, &y1),
                b.clone() + (v.clone() - x0.clone()) * (y1 - b.clone()) / (a - x0)
            );
            prop_assert_eq!(v.powu(k), num_traits::pow(v.clone(), k as usize));
        }
    }
}
