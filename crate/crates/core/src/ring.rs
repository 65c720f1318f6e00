//! Fixed-point arithmetic in the ring `Z_{2^l}`.
//!
//! Ring elements live in a `u128` (two 64-bit limbs), so any width from 64 to
//! 128 bits is supported by masking. Reals are encoded with `f` fractional
//! bits and interpreted as two's-complement signed values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("invalid ring configuration: {0}")]
    InvalidConfig(String),
    #[error("value {value} out of fixed-point range (|x| must be < 2^{limit_bits})")]
    Overflow { value: f64, limit_bits: u32 },
    #[error("byte length {got} does not match ring width ({expected} bytes)")]
    BadLength { expected: usize, got: usize },
}

/// Ring and fixed-point parameters shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingConfig {
    /// Ring width `l` in bits.
    pub bits: u32,
    /// Fractional bits `f`.
    pub frac_bits: u32,
    /// Statistical masking slack `sigma` in bits, used by the HE conversions.
    pub sigma: u32,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            bits: 128,
            frac_bits: 20,
            sigma: 40,
        }
    }
}

/// One element of `Z_{2^l}`. The raw value is always `< 2^l`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RingValue(pub u128);

impl RingConfig {
    pub fn new(bits: u32, frac_bits: u32, sigma: u32) -> Result<Self, RingError> {
        let cfg = Self {
            bits,
            frac_bits,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RingError> {
        if !(64..=128).contains(&self.bits) || !self.bits.is_multiple_of(8) {
            return Err(RingError::InvalidConfig(format!(
                "ring width {} must be a multiple of 8 in 64..=128",
                self.bits
            )));
        }
        if self.frac_bits < 1 || 2 * self.frac_bits + 8 >= self.bits {
            return Err(RingError::InvalidConfig(format!(
                "need 1 <= f and 2f + 8 < l (f = {}, l = {})",
                self.frac_bits, self.bits
            )));
        }
        if self.sigma < 1 || self.bits + self.sigma > 1024 {
            return Err(RingError::InvalidConfig(format!(
                "sigma = {} must be >= 1 with l + sigma <= 1024",
                self.sigma
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn mask(&self) -> u128 {
        if self.bits == 128 {
            u128::MAX
        } else {
            (1u128 << self.bits) - 1
        }
    }

    /// Serialized size of one element.
    #[inline]
    pub fn byte_len(&self) -> usize {
        (self.bits / 8) as usize
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    #[inline]
    pub fn reduce(&self, raw: u128) -> RingValue {
        RingValue(raw & self.mask())
    }

    pub fn encode(&self, x: f64) -> Result<RingValue, RingError> {
        let limit_bits = self.bits - self.frac_bits - 1;
        if !x.is_finite() || x.abs() >= (limit_bits as f64).exp2() {
            return Err(RingError::Overflow {
                value: x,
                limit_bits,
            });
        }
        Ok(self.from_signed((x * self.scale()).round() as i128))
    }

    /// Encodes a value with `frac` fractional bits instead of `f`.
    pub fn encode_with(&self, x: f64, frac: u32) -> Result<RingValue, RingError> {
        let limit_bits = self.bits.saturating_sub(frac + 1);
        if !x.is_finite() || x.abs() >= (limit_bits as f64).exp2() {
            return Err(RingError::Overflow {
                value: x,
                limit_bits,
            });
        }
        Ok(self.from_signed((x * (frac as f64).exp2()).round() as i128))
    }

    pub fn decode(&self, v: RingValue) -> f64 {
        self.to_signed(v) as f64 / self.scale()
    }

    /// Decodes a value carrying `frac` fractional bits (e.g. `2f` after a product).
    pub fn decode_with(&self, v: RingValue, frac: u32) -> f64 {
        self.to_signed(v) as f64 / (frac as f64).exp2()
    }

    /// Two's-complement signed interpretation.
    #[inline]
    pub fn to_signed(&self, v: RingValue) -> i128 {
        let shift = 128 - self.bits;
        ((v.0 << shift) as i128) >> shift
    }

    #[inline]
    pub fn from_signed(&self, x: i128) -> RingValue {
        self.reduce(x as u128)
    }

    #[inline]
    pub fn from_int(&self, x: i64) -> RingValue {
        self.from_signed(x as i128)
    }

    #[inline]
    pub fn add(&self, a: RingValue, b: RingValue) -> RingValue {
        self.reduce(a.0.wrapping_add(b.0))
    }

    #[inline]
    pub fn sub(&self, a: RingValue, b: RingValue) -> RingValue {
        self.reduce(a.0.wrapping_sub(b.0))
    }

    #[inline]
    pub fn neg(&self, a: RingValue) -> RingValue {
        self.reduce(a.0.wrapping_neg())
    }

    /// Plain ring product. Two encoded operands yield `2f` fractional bits.
    #[inline]
    pub fn mul(&self, a: RingValue, b: RingValue) -> RingValue {
        self.reduce(a.0.wrapping_mul(b.0))
    }

    /// Arithmetic right shift by `f` of one share of a `2f`-scaled product.
    ///
    /// Party 0 shifts its share directly; party 1 shifts the negation and negates
    /// back. The reconstructed result is within one unit of the true quotient
    /// unless the secret is close to the wrap-around boundary.
    pub fn truncate_share(&self, v: RingValue, party_index: usize) -> RingValue {
        self.truncate_share_by(v, party_index, self.frac_bits)
    }

    pub fn truncate_share_by(&self, v: RingValue, party_index: usize, shift: u32) -> RingValue {
        if party_index == 0 {
            self.from_signed(self.to_signed(v) >> shift)
        } else {
            let neg = self.to_signed(self.neg(v)) >> shift;
            self.neg(self.from_signed(neg))
        }
    }

    pub fn to_bytes(&self, v: RingValue, out: &mut Vec<u8>) {
        out.extend_from_slice(&v.0.to_le_bytes()[..self.byte_len()]);
    }

    pub fn from_bytes(&self, bytes: &[u8]) -> Result<RingValue, RingError> {
        let n = self.byte_len();
        if bytes.len() != n {
            return Err(RingError::BadLength {
                expected: n,
                got: bytes.len(),
            });
        }
        let mut buf = [0u8; 16];
        buf[..n].copy_from_slice(bytes);
        Ok(RingValue(u128::from_le_bytes(buf)))
    }

    pub fn to_hex(&self, v: RingValue) -> String {
        let mut out = Vec::with_capacity(self.byte_len());
        self.to_bytes(v, &mut out);
        hex::encode(out)
    }

    pub fn from_hex(&self, s: &str) -> Result<RingValue, RingError> {
        let bytes = hex::decode(s).map_err(|e| RingError::InvalidConfig(e.to_string()))?;
        self.from_bytes(&bytes)
    }

    pub fn encode_vec(&self, xs: &[f64]) -> Result<Vec<RingValue>, RingError> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    pub fn decode_vec(&self, vs: &[RingValue]) -> Vec<f64> {
        vs.iter().map(|&v| self.decode(v)).collect()
    }

    /// Uniformly random ring element.
    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> RingValue {
        self.reduce(rng.gen::<u128>())
    }
}
