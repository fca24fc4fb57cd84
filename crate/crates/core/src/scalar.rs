//! Number abstraction shared by the exact (big-rational) and floating build modes.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when arithmetic is exact (rational mode).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(n: i64) -> Self;
    fn ratio(num: i64, den: i64) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// self * 2^e, exactly.
    fn ldexp(&self, e: i32) -> Self;
    fn abs(&self) -> Self;
    /// Nearest multiple of 2^-bits (ties away from zero). Identity in floating mode.
    fn round_frac_bits(&self, bits: u32) -> Self;
    fn total_cmp(&self, other: &Self) -> Ordering;
    fn parse(text: &str) -> Option<Self>;

    fn is_zero_val(&self) -> bool {
        self.total_cmp(&Self::zero()) == Ordering::Equal
    }
    fn min_val(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }
    fn max_val(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }
    fn half() -> Self {
        Self::ratio(1, 2)
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
    fn from_int(n: i64) -> Self {
        n as f64
    }
    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn ldexp(&self, e: i32) -> Self {
        self * (e as f64).exp2()
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn round_frac_bits(&self, _bits: u32) -> Self {
        *self
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        debug_assert!(self.is_finite() && other.is_finite());
        self.partial_cmp(other).expect("non-finite scalar")
    }
    fn parse(text: &str) -> Option<Self> {
        if let Some((n, d)) = text.split_once('/') {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            if d == 0.0 {
                return None;
            }
            Some(n / d)
        } else {
            text.trim().parse().ok()
        }
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as One>::one()
    }
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("non-finite float")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Fall back to a scaled division for extreme exponents.
            let num = self.numer();
            let den = self.denom();
            let shift = (den.bits() as i64 - num.bits() as i64).max(0) as u64;
            let scaled = (num << shift) / den;
            scaled.to_f64().unwrap_or(0.0) * (-(shift as f64)).exp2()
        })
    }
    fn ldexp(&self, e: i32) -> Self {
        if e >= 0 {
            BigRational::new(self.numer() << (e as u32), self.denom().clone())
        } else {
            BigRational::new(self.numer().clone(), self.denom() << ((-e) as u32))
        }
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn round_frac_bits(&self, bits: u32) -> Self {
        let scaled = self.ldexp(bits as i32);
        if scaled.is_integer() {
            return self.clone();
        }
        scaled.round().ldexp(-(bits as i32))
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
    fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(BigRational::new(n, d))
        } else if t.contains(['.', 'e', 'E']) {
            let x: f64 = t.parse().ok()?;
            BigRational::from_float(x)
        } else {
            let n: BigInt = t.parse().ok()?;
            Some(BigRational::from_integer(n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_ldexp_and_round() {
        let x = BigRational::ratio(1, 3);
        assert_eq!(x.ldexp(3), BigRational::ratio(8, 3));
        assert_eq!(x.ldexp(-2), BigRational::ratio(1, 12));
        let r = x.round_frac_bits(4); // nearest multiple of 1/16 to 1/3 is 5/16... 16/3 = 5.33 -> 5
        assert_eq!(r, BigRational::ratio(5, 16));
        // Already a dyadic of that precision: unchanged.
        let y = BigRational::ratio(7, 16);
        assert_eq!(y.round_frac_bits(4), y);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(<BigRational as Scalar>::parse("7/18"), Some(BigRational::ratio(7, 18)));
        assert_eq!(<f64 as Scalar>::parse("-1/2"), Some(-0.5));
        assert_eq!(<f64 as Scalar>::parse("0.25"), Some(0.25));
    }
}
