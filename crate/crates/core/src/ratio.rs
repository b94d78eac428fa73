//! Exact rational helpers: construction, `"num/den"` report serialization, and
//! exact comparisons against t-th roots of rationals (needed because several
//! derived constants are irrational; pass/fail verdicts compare t-th powers
//! instead of approximating).

use crate::Rational;
use num::{BigInt, One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

/// Shorthand constructor from machine integers.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Canonical `"num/den"` form used in every JSON report (lossless round-trip).
pub fn ratio_str(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parse the canonical `"num/den"` form; also accepts a bare integer.
pub fn parse_ratio(s: &str) -> Option<Rational> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num: BigInt = n.trim().parse().ok()?;
    let den: BigInt = d.trim().parse().ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

/// Float annotation for human-readable report fields (never used in verdicts).
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact non-negative integer power.
pub fn pow(r: &Rational, n: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..n {
        acc *= r.clone();
    }
    acc
}

/// Exact comparison of `a` against `b * base^(1/t)` for non-negative `a`, `b`
/// and positive `base`, without leaving the rationals: compares `a^t` with
/// `b^t * base`.
pub fn cmp_vs_root(a: &Rational, b: &Rational, base: &Rational, t: u32) -> Ordering {
    assert!(!a.is_negative() && !b.is_negative() && base.is_positive());
    assert!(t >= 1);
    pow(a, t).cmp(&(pow(b, t) * base.clone()))
}

/// Deterministic rational stand-in for `eps^(1/3)`: the exact cube root when
/// both numerator and denominator are perfect cubes, otherwise the smallest
/// power of two that is >= the real cube root.
pub fn cube_root_or_pow2(eps: &Rational) -> Rational {
    assert!(eps.is_positive());
    let num = eps.numer();
    let den = eps.denom();
    if let (Some(n3), Some(d3)) = (exact_cbrt(num), exact_cbrt(den)) {
        return Rational::new(n3, d3);
    }
    // Smallest 2^k (k may be negative) with (2^k)^3 >= eps.
    let two = rat(2, 1);
    let half = rat(1, 2);
    let mut cand = Rational::one();
    if pow(&cand, 3) >= *eps {
        loop {
            let next = cand.clone() * half.clone();
            if pow(&next, 3) >= *eps {
                cand = next;
            } else {
                return cand;
            }
        }
    }
    loop {
        cand *= two.clone();
        if pow(&cand, 3) >= *eps {
            return cand;
        }
    }
}

fn exact_cbrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.nth_root(3);
    if &(&r * &r * &r) == n {
        Some(r)
    } else {
        None
    }
}

/// Serde adapter serializing a [`Rational`] as the canonical `"num/den"` string.
pub mod serde_ratio {
    use super::{parse_ratio, ratio_str};
    use crate::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ratio_str(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).ok_or_else(|| D::Error::custom(format!("invalid rational: {s}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_string_round_trip() {
        for (n, d) in [(0, 1), (1, 3), (-7, 12), (22, 7)] {
            let r = rat(n, d);
            assert_eq!(parse_ratio(&ratio_str(&r)).unwrap(), r);
        }
        assert_eq!(parse_ratio("5").unwrap(), rat(5, 1));
        assert!(parse_ratio("1/0").is_none());
    }

    #[test]
    fn root_comparison_is_exact() {
        // 3/2 vs 1 * 2^(1/2): (3/2)^2 = 9/4 > 2, so 3/2 > sqrt(2).
        assert_eq!(cmp_vs_root(&rat(3, 2), &rat(1, 1), &rat(2, 1), 2), Ordering::Greater);
        // 7/5 vs sqrt(2): 49/25 < 2.
        assert_eq!(cmp_vs_root(&rat(7, 5), &rat(1, 1), &rat(2, 1), 2), Ordering::Less);
        // Exact hit: 2/3 vs (8/27)^(1/3).
        assert_eq!(cmp_vs_root(&rat(2, 3), &rat(1, 1), &rat(8, 27), 3), Ordering::Equal);
    }

    #[test]
    fn cube_root_choices() {
        assert_eq!(cube_root_or_pow2(&rat(1, 8)), rat(1, 2));
        assert_eq!(cube_root_or_pow2(&rat(27, 64)), rat(3, 4));
        // 1/5 is not a perfect cube: cbrt(1/5) ~ 0.5848, smallest power of two above it is 1.
        assert_eq!(cube_root_or_pow2(&rat(1, 5)), rat(1, 1));
        // cbrt(1/10) ~ 0.464 -> 1/2.
        assert_eq!(cube_root_or_pow2(&rat(1, 10)), rat(1, 2));
    }
}
