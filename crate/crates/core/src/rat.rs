//! Exact rational coordinates.
//!
//! Every construction point in the Cantor hierarchy is a rational with
//! denominator dividing `4 * 3^K`, and bisection midpoints only add powers
//! of two.  Storing coordinates as [`BigRational`] makes endpoint and cube
//! membership decisions exact; conversion to `f64` happens only at kernel
//! evaluation time.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Rational from an integer pair.
pub fn rat(num: i64, den: i64) -> Rat {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from an integer.
pub fn ratio(num: i64) -> Rat {
    BigRational::from(BigInt::from(num))
}

/// Exact `3^-k`.
pub fn pow3_inv(k: u32) -> Rat {
    BigRational::new(BigInt::from(1), BigInt::from(3u8).pow(k))
}

/// Exact `p^k` for a rational base.
pub fn rat_pow(base: &Rat, k: u32) -> Rat {
    let mut acc = ratio(1);
    for _ in 0..k {
        acc *= base;
    }
    acc
}

pub fn to_f64(r: &Rat) -> f64 {
    // BigRational::to_f64 divides two correctly rounded conversions; the
    // denominators reached here (<= 4 * 3^15 * 2^200) stay far below the
    // f64 overflow threshold.
    r.to_f64().expect("rational -> f64")
}

pub fn point_f64(p: &[Rat]) -> Vec<f64> {
    p.iter().map(to_f64).collect()
}

/// Renders as `p/q` (or just `p` when the denominator is one).
pub fn format_rat(r: &Rat) -> String {
    if r.denom() == &BigInt::from(1) {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p`, `p/q`, or a decimal literal such as `0.25`.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" {
            BigInt::from(0)
        } else {
            int.parse().ok()?
        };
        let digits = frac.len() as u32;
        let frac_num: BigInt = if frac.is_empty() {
            BigInt::from(0)
        } else {
            frac.parse().ok()?
        };
        let den = BigInt::from(10u8).pow(digits);
        let mag = int.abs() * &den + frac_num;
        let signed = if neg { -mag } else { mag };
        return Some(BigRational::new(signed, den));
    }
    let p: BigInt = s.parse().ok()?;
    Some(BigRational::from(p))
}

/// Largest rational `a/2^30 <= sqrt(x)`; used where an irrational scale
/// factor must be replaced by a nearby rational that never overshoots.
pub fn rat_sqrt_below(x: &Rat) -> Rat {
    assert!(!x.is_negative(), "sqrt of negative rational");
    let scale = BigInt::from(1u8) << 30u8;
    let target = x * BigRational::from(&scale * &scale);
    // integer sqrt of floor(target)
    let floor = target.to_integer();
    let mut lo = BigInt::from(0);
    let mut hi = &floor + 1;
    while &lo + 1 < hi {
        let mid: BigInt = (&lo + &hi) / 2;
        if &mid * &mid <= floor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BigRational::new(lo, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["5/12", "-7/36", "3", "0.25", "-1.5"] {
            let r = parse_rat(s).unwrap();
            let r2 = parse_rat(&format_rat(&r)).unwrap();
            assert_eq!(r, r2);
        }
        assert_eq!(parse_rat("1/4").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("0.25").unwrap(), rat(1, 4));
        assert!(parse_rat("1/0").is_none());
    }

    #[test]
    fn sqrt_below_bounds() {
        for (p, q) in [(2i64, 1i64), (1, 2), (3, 1), (7, 5)] {
            let x = rat(p, q);
            let s = rat_sqrt_below(&x);
            assert!(&s * &s <= x);
            let next = &s + rat(1, 1 << 30);
            assert!(&next * &next > x);
        }
    }

    #[test]
    fn pow3_inv_exact() {
        assert_eq!(pow3_inv(3), rat(1, 27));
    }
}
