//! Exact rational scalars and node capacities.
//!
//! All game data (capacities, demands, flows, payoffs) is kept as arbitrary
//! precision rationals so that core membership and certificate checks are
//! exact equality tests, never tolerance comparisons.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::fmt;

pub type Rational = num_rational::BigRational;

/// Shorthand for small rational constants, mostly used from tests.
pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Shorthand for integer-valued rationals.
pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parses "p/q", an integer, or a plain decimal ("3.25" reads as 13/4).
/// Decimals are parsed exactly as scaled integers, never through floats.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty rational literal".into());
    }
    if let Some((p, q)) = s.split_once('/') {
        let numer: BigInt = p
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {s:?}"))?;
        let denom: BigInt = q
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        if denom.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(Rational::new(numer, denom));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.trim_start().starts_with('-');
        let whole_part: BigInt = if whole.is_empty() || whole == "-" || whole == "+" {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| format!("bad decimal {s:?}"))?
        };
        if frac.is_empty() {
            return Ok(Rational::from_integer(whole_part));
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal {s:?}"));
        }
        let frac_num: BigInt = frac.parse().map_err(|_| format!("bad decimal {s:?}"))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let magnitude = whole_part.abs() * &scale + frac_num;
        let signed = if negative { -magnitude } else { magnitude };
        return Ok(Rational::new(signed, scale));
    }
    let numer: BigInt = s.parse().map_err(|_| format!("bad rational {s:?}"))?;
    Ok(Rational::from_integer(numer))
}

/// Canonical rendering: "p" for integers, "p/q" otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering to six places (round half away from zero), used in
/// human-readable report columns next to the exact value.
pub fn decimal6(r: &Rational) -> String {
    let scale = BigInt::from(1_000_000u32);
    let scaled = r * Rational::from_integer(scale.clone());
    let half = rat(1, 2);
    let rounded = if scaled.is_negative() {
        -((-scaled + &half).floor())
    } else {
        (scaled + &half).floor()
    };
    let units = rounded.to_integer();
    let (sign, magnitude) = if units.is_negative() {
        ("-", -units)
    } else {
        ("", units)
    };
    let whole = &magnitude / &scale;
    let frac = &magnitude % &scale;
    format!("{sign}{whole}.{frac:06}")
}

/// A node capacity: a finite nonnegative rational or unbounded.
/// Subtracting from `Unbounded` leaves it `Unbounded`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Capacity {
    Finite(Rational),
    Unbounded,
}

impl Capacity {
    pub fn finite(r: Rational) -> Self {
        Capacity::Finite(r)
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Capacity::Unbounded)
    }

    pub fn as_finite(&self) -> Option<&Rational> {
        match self {
            Capacity::Finite(r) => Some(r),
            Capacity::Unbounded => None,
        }
    }

    /// True when a usage of `amount` fits under this capacity.
    pub fn admits(&self, amount: &Rational) -> bool {
        match self {
            Capacity::Finite(c) => amount <= c,
            Capacity::Unbounded => true,
        }
    }

    pub fn decrease(&mut self, amount: &Rational) {
        if let Capacity::Finite(c) = self {
            *c -= amount;
        }
    }

    /// min(self, r) as a rational; `Unbounded` never binds.
    pub fn min_with<'a>(&'a self, r: &'a Rational) -> &'a Rational {
        match self {
            Capacity::Finite(c) if c < r => c,
            _ => r,
        }
    }

    pub fn scaled(&self, factor: &Rational) -> Capacity {
        match self {
            Capacity::Finite(c) => Capacity::Finite(c * factor),
            Capacity::Unbounded => Capacity::Unbounded,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(r) => write!(f, "{}", format_rational(r)),
            Capacity::Unbounded => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        assert_eq!(parse_rational("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rational("-7").unwrap(), int(-7));
        assert_eq!(parse_rational("3.25").unwrap(), rat(13, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("2.").unwrap(), int(2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format_rational(&rat(6, 4)), "3/2");
        assert_eq!(format_rational(&int(5)), "5");
        assert_eq!(format_rational(&rat(-6, 4)), "-3/2");
    }

    #[test]
    fn decimal_rendering_rounds_half_away_from_zero() {
        assert_eq!(decimal6(&rat(1, 3)), "0.333333");
        assert_eq!(decimal6(&rat(2, 3)), "0.666667");
        assert_eq!(decimal6(&rat(1, 2_000_000)), "0.000001");
        assert_eq!(decimal6(&rat(-1, 2_000_000)), "-0.000001");
        assert_eq!(decimal6(&int(2)), "2.000000");
    }

    #[test]
    fn capacity_arithmetic_keeps_unbounded() {
        let mut c = Capacity::Unbounded;
        c.decrease(&int(10));
        assert!(c.is_unbounded());
        let mut c = Capacity::finite(int(3));
        c.decrease(&int(1));
        assert_eq!(c, Capacity::finite(int(2)));
        assert_eq!(Capacity::Unbounded.min_with(&int(7)), &int(7));
        assert_eq!(Capacity::finite(int(2)).min_with(&int(7)), &int(2));
    }
}
