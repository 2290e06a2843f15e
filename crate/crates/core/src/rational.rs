//! Exact rationals for fiber translations.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a as i64
}

pub(crate) fn lcm(a: i64, b: i64) -> i64 {
    if a == 0 || b == 0 {
        return 0;
    }
    (a / gcd(a, b) * b).abs()
}

/// A reduced fraction `num/den` with `den > 0`.
///
/// Serialized as the two-element array `[num, den]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[i64; 2]")]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Invalid("rational with zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Ok(Rational {
            num: s * num / g,
            den: s * den / g,
        })
    }

    pub const fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn add(&self, other: &Rational) -> Rational {
        let n = self.num as i128 * other.den as i128 + other.num as i128 * self.den as i128;
        let d = self.den as i128 * other.den as i128;
        reduce128(n, d)
    }

    pub fn neg(&self) -> Rational {
        Rational {
            num: -self.num,
            den: self.den,
        }
    }

    pub fn mul_int(&self, k: i64) -> Rational {
        reduce128(self.num as i128 * k as i128, self.den as i128)
    }

    /// Representative in `[0, 1)`.
    pub fn fract(&self) -> Rational {
        Rational {
            num: self.num.rem_euclid(self.den),
            den: self.den,
        }
    }

    /// Distance to the nearest integer, as an exact rational in `[0, 1/2]`.
    pub fn dist_to_integer(&self) -> Rational {
        let f = self.fract();
        let other = f.den - f.num;
        Rational {
            num: f.num.min(other),
            den: f.den,
        }
        .reduced()
    }

    fn reduced(self) -> Rational {
        Rational::new(self.num, self.den).expect("nonzero denominator")
    }
}

fn reduce128(n: i128, d: i128) -> Rational {
    let mut a = n.unsigned_abs();
    let mut b = d.unsigned_abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    let g = a.max(1) as i128;
    let s = if d < 0 { -1 } else { 1 };
    Rational {
        num: (s * n / g) as i64,
        den: (s * d / g) as i64,
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl TryFrom<[i64; 2]> for Rational {
    type Error = Error;
    fn try_from(v: [i64; 2]) -> Result<Self> {
        Rational::new(v[0], v[1])
    }
}

impl From<Rational> for [i64; 2] {
    fn from(r: Rational) -> [i64; 2] {
        [r.num, r.den]
    }
}

/// Componentwise helpers for rational vectors.
pub fn vec_is_integer(v: &[Rational]) -> bool {
    v.iter().all(Rational::is_integer)
}

pub fn vec_mul_int(v: &[Rational], k: i64) -> Vec<Rational> {
    v.iter().map(|r| r.mul_int(k)).collect()
}

pub fn vec_add(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
}

pub fn vec_fract(v: &[Rational]) -> Vec<Rational> {
    v.iter().map(Rational::fract).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_and_normalizes_sign() {
        let r = Rational::new(6, -4).unwrap();
        assert_eq!((r.num(), r.den()), (-3, 2));
        assert!(Rational::new(1, 0).is_err());
    }

    #[test]
    fn fract_and_distance() {
        let r = Rational::new(-1, 3).unwrap();
        assert_eq!(r.fract(), Rational::new(2, 3).unwrap());
        assert_eq!(r.dist_to_integer(), Rational::new(1, 3).unwrap());
        assert_eq!(Rational::new(5, 2).unwrap().dist_to_integer(), Rational::new(1, 2).unwrap());
        assert_eq!(Rational::integer(7).dist_to_integer(), Rational::ZERO);
    }

    #[test]
    fn arithmetic() {
        let a = Rational::new(1, 2).unwrap();
        let b = Rational::new(1, 3).unwrap();
        assert_eq!(a.add(&b), Rational::new(5, 6).unwrap());
        assert_eq!(b.mul_int(3), Rational::integer(1));
        assert_eq!(lcm(2, 3), 6);
        assert!(a > b);
    }
}
