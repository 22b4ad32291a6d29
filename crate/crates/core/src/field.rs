//! Prime field arithmetic.
//!
//! All secret shares and MPC wire values live in the field of order
//! p = 2^61 - 1. The modulus is a Mersenne prime, so reducing a 122-bit
//! product is two shifts and an add.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The protocol modulus, 2^61 - 1.
pub const MODULUS: u64 = (1 << 61) - 1;

/// An element of the prime field of order `P`.
///
/// `P` must be an odd prime below 2^62. The production instance is
/// [`FieldElement`]; small moduli exist so hand-computed traces can be checked
/// against the same code paths.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Fp<const P: u64>(u64);

/// Production field element, p = 2^61 - 1.
pub type FieldElement = Fp<MODULUS>;

#[inline]
fn mersenne_fold(x: u64) -> u64 {
    // x < 2^64, so one fold leaves at most 2^61 + 7
    let folded = (x & MODULUS) + (x >> 61);
    if folded >= MODULUS {
        folded - MODULUS
    } else {
        folded
    }
}

impl<const P: u64> Fp<P> {
    pub const ZERO: Self = Fp(0);
    pub const ONE: Self = Fp(1);
    pub const MODULUS: u64 = P;

    #[inline]
    fn reduce_wide(x: u128) -> u64 {
        if P == MODULUS {
            let lo = (x as u64) & MODULUS;
            let hi = (x >> 61) as u64;
            mersenne_fold(lo + hi)
        } else {
            (x % P as u128) as u64
        }
    }

    /// Reduces an arbitrary `u64` into the field.
    #[inline]
    pub fn new(value: u64) -> Self {
        if P == MODULUS {
            Fp(mersenne_fold(value))
        } else {
            Fp(value % P)
        }
    }

    /// Canonical representative in `[0, P)`.
    pub fn value(self) -> u64 {
        self.0
    }

    /// Maps a signed integer to its residue.
    pub fn from_i64(value: i64) -> Self {
        if value >= 0 {
            Self::new(value as u64)
        } else {
            -Self::new(value.unsigned_abs())
        }
    }

    /// Uniform sample over the whole field.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // rejection sampling on the modulus bit length keeps the law exact
        let shift = P.leading_zeros();
        loop {
            let candidate = rng.random::<u64>() >> shift;
            if candidate < P {
                return Fp(candidate);
            }
        }
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn pow(self, mut exponent: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exponent > 0 {
            if exponent & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exponent >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(P - 2))
        }
    }

    /// Decimal string, the on-disk and on-wire representation.
    pub fn to_decimal(self) -> String {
        self.0.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFieldError {
    #[error("not a decimal integer: {0:?}")]
    NotDecimal(String),
    #[error("value {0} is not below the field modulus")]
    OutOfRange(u64),
}

impl<const P: u64> FromStr for Fp<P> {
    type Err = ParseFieldError;

    /// Parses a canonical decimal representative. Values `>= P` are rejected
    /// rather than silently reduced.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseFieldError::NotDecimal(s.to_string()));
        }
        let v: u64 = s
            .parse()
            .map_err(|_| ParseFieldError::NotDecimal(s.to_string()))?;
        if v >= P {
            return Err(ParseFieldError::OutOfRange(v));
        }
        Ok(Fp(v))
    }
}

impl<const P: u64> fmt::Debug for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F({})", self.0)
    }
}

impl<const P: u64> fmt::Display for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> From<u64> for Fp<P> {
    fn from(v: u64) -> Self {
        Self::new(v)
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        // both operands < 2^62, the sum fits in u64
        let s = self.0 + rhs.0;
        Fp(if s >= P { s - P } else { s })
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0 + P - rhs.0)
        }
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        if self.0 == 0 {
            self
        } else {
            Fp(P - self.0)
        }
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Fp(Self::reduce_wide(self.0 as u128 * rhs.0 as u128))
    }
}

impl<const P: u64> AddAssign for Fp<P> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const P: u64> SubAssign for Fp<P> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const P: u64> MulAssign for Fp<P> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const P: u64> Sum for Fp<P> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + x)
    }
}

impl<'a, const P: u64> Sum<&'a Fp<P>> for Fp<P> {
    fn sum<I: Iterator<Item = &'a Fp<P>>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + *x)
    }
}

impl<const P: u64> Serialize for Fp<P> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal())
    }
}

impl<'de, const P: u64> Deserialize<'de> for Fp<P> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
