//! Exact rational helpers shared by every module.

use crate::error::{Error, Result};
use num::{BigInt, BigRational, BigUint, One, Signed, ToPrimitive, Zero};

/// Exact rational scalar used for probabilities, utilities and LP data.
pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn q_from_usize(n: usize) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_from_biguint(n: &BigUint) -> Q {
    Q::from_integer(BigInt::from(n.clone()))
}

/// Exact value of a finite `f64`; every finite double is a dyadic rational.
pub fn q_from_f64(x: f64) -> Result<Q> {
    Q::from_float(x).ok_or_else(|| Error::Parse(format!("non-finite number {x}")))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    num::integer::binomial(BigUint::from(n), BigUint::from(k))
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

pub fn pow(x: &Q, e: usize) -> Q {
    num::pow::pow(x.clone(), e)
}

/// Parses `"0.8"`, `"-1.25e-3"`, `"4/5"` or `"7"` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().map_err(|_| bad())?;
        let d: BigInt = b.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Q::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Q::from_integer(all);
    if scale >= 0 {
        value *= Q::from_integer(num::pow::pow(ten, scale as usize));
    } else {
        value /= Q::from_integer(num::pow::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Renders a rational as `n` or `n/d`.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Positive part.
pub fn pos_part(x: &Q) -> Q {
    if x.is_positive() {
        x.clone()
    } else {
        Q::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_forms() {
        assert_eq!(parse_rational("0.8").unwrap(), frac(4, 5));
        assert_eq!(parse_rational("4/5").unwrap(), frac(4, 5));
        assert_eq!(parse_rational("-1.5").unwrap(), frac(-3, 2));
        assert_eq!(parse_rational("2.5e-1").unwrap(), frac(1, 4));
        assert_eq!(parse_rational("3").unwrap(), q(3));
        assert_eq!(parse_rational(".5").unwrap(), frac(1, 2));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn f64_conversion_is_exact() {
        assert_eq!(q_from_f64(0.5).unwrap(), frac(1, 2));
        assert_ne!(q_from_f64(0.1).unwrap(), frac(1, 10));
    }

    #[test]
    fn formatting_round_trips() {
        for s in ["3/8", "-7", "1/3"] {
            assert_eq!(fmt_q(&parse_rational(s).unwrap()), s);
        }
    }
}
