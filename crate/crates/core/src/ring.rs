//! Arithmetic in the residue rings Z/2^q.
//!
//! Hot loops work on raw `u32` words reduced through a [`Modulus`]; the typed
//! [`RingValue`] is used at API boundaries where mixing moduli would be a bug.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported exponent. Universe sizes become impractical long before.
pub const MAX_Q: u32 = 24;

/// The ring Z/2^q, identified by its exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Modulus {
    q: u32,
}

impl Modulus {
    pub fn new(q: u32) -> Result<Self> {
        if q == 0 || q > MAX_Q {
            return Err(Error::Argument(format!("modulus exponent q={q} outside 1..={MAX_Q}")));
        }
        Ok(Modulus { q })
    }

    #[inline]
    pub fn q(self) -> u32 {
        self.q
    }

    /// Number of ring elements, 2^q.
    #[inline]
    pub fn order(self) -> u32 {
        1 << self.q
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.order() - 1
    }

    #[inline]
    pub fn reduce(self, x: u64) -> u32 {
        (x & self.mask() as u64) as u32
    }

    /// Reduces a signed integer into `0..2^q`.
    #[inline]
    pub fn reduce_signed(self, x: i64) -> u32 {
        (x as u64 & self.mask() as u64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        a.wrapping_add(b) & self.mask()
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        a.wrapping_sub(b) & self.mask()
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        0u32.wrapping_sub(a) & self.mask()
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        self.reduce(a as u64 * b as u64)
    }

    pub fn sum<I: IntoIterator<Item = u32>>(self, it: I) -> u32 {
        it.into_iter().fold(0, |acc, x| self.add(acc, x))
    }

    /// 2-adic valuation; zero has valuation `q`.
    #[inline]
    pub fn valuation(self, a: u32) -> u32 {
        let a = a & self.mask();
        if a == 0 {
            self.q
        } else {
            a.trailing_zeros()
        }
    }

    #[inline]
    pub fn is_unit(self, a: u32) -> bool {
        a & 1 == 1
    }

    /// Inverse of an odd element, by Newton iteration on the 2-adic inverse.
    pub fn unit_inverse(self, a: u32) -> Option<u32> {
        if !self.is_unit(a) {
            return None;
        }
        let a = a as u64;
        let mut x: u64 = 1;
        for _ in 0..5 {
            x = x.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(x)));
        }
        Some(self.reduce(x))
    }

    pub fn value(self, v: u32) -> RingValue {
        RingValue { q: self.q, v: v & self.mask() }
    }

    pub fn zero(self) -> RingValue {
        self.value(0)
    }
}

/// An element of Z/2^q carrying its modulus.
///
/// Arithmetic between values with different `q` panics; use the `checked_*`
/// methods where the operands come from untrusted input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RingValue {
    q: u32,
    v: u32,
}

impl RingValue {
    pub fn new(q: u32, v: i64) -> Result<Self> {
        let m = Modulus::new(q)?;
        Ok(m.value(m.reduce_signed(v)))
    }

    #[inline]
    pub fn q(self) -> u32 {
        self.q
    }

    #[inline]
    pub fn modulus(self) -> Modulus {
        Modulus { q: self.q }
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.v
    }

    fn same_modulus(self, other: RingValue) -> Result<Modulus> {
        if self.q != other.q {
            return Err(Error::Argument(format!(
                "mixed-modulus arithmetic: Z/2^{} with Z/2^{}",
                self.q, other.q
            )));
        }
        Ok(self.modulus())
    }

    pub fn checked_add(self, other: RingValue) -> Result<RingValue> {
        let m = self.same_modulus(other)?;
        Ok(m.value(m.add(self.v, other.v)))
    }

    pub fn checked_sub(self, other: RingValue) -> Result<RingValue> {
        let m = self.same_modulus(other)?;
        Ok(m.value(m.sub(self.v, other.v)))
    }

    pub fn checked_mul(self, other: RingValue) -> Result<RingValue> {
        let m = self.same_modulus(other)?;
        Ok(m.value(m.mul(self.v, other.v)))
    }
}

impl fmt::Display for RingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod 2^{})", self.v, self.q)
    }
}

impl Add for RingValue {
    type Output = RingValue;
    fn add(self, rhs: RingValue) -> RingValue {
        self.checked_add(rhs).expect("ring operands must share q")
    }
}

impl Sub for RingValue {
    type Output = RingValue;
    fn sub(self, rhs: RingValue) -> RingValue {
        self.checked_sub(rhs).expect("ring operands must share q")
    }
}

impl Mul for RingValue {
    type Output = RingValue;
    fn mul(self, rhs: RingValue) -> RingValue {
        self.checked_mul(rhs).expect("ring operands must share q")
    }
}

impl Neg for RingValue {
    type Output = RingValue;
    fn neg(self) -> RingValue {
        let m = self.modulus();
        m.value(m.neg(self.v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_every_unit() {
        for q in 1..=12 {
            let m = Modulus::new(q).unwrap();
            for a in (1..m.order()).step_by(2) {
                let inv = m.unit_inverse(a).unwrap();
                assert_eq!(m.mul(a, inv), 1, "q={q} a={a}");
            }
            assert_eq!(m.unit_inverse(2 % m.order()), None);
        }
    }

    #[test]
    fn valuation_of_zero_is_q() {
        let m = Modulus::new(5).unwrap();
        assert_eq!(m.valuation(0), 5);
        assert_eq!(m.valuation(12), 2);
        assert_eq!(m.valuation(32), 5);
    }

    #[test]
    fn mixed_moduli_are_rejected() {
        let a = RingValue::new(2, 1).unwrap();
        let b = RingValue::new(3, 1).unwrap();
        assert!(a.checked_add(b).is_err());
        assert_eq!((a + a).value(), 2);
        assert_eq!((-a).value(), 3);
    }

    #[test]
    #[should_panic(expected = "share q")]
    fn operator_panics_on_mixed_moduli() {
        let _ = RingValue::new(2, 1).unwrap() + RingValue::new(4, 1).unwrap();
    }
}
