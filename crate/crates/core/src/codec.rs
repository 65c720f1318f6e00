//! Little-endian payload encoding shared by the protocol and dealer messages.

use crate::ring::{RingConfig, RingValue};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("decode error: {0}")]
pub struct DecodeError(pub String);

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64s(&mut self, vs: &[u64]) -> &mut Self {
        for &v in vs {
            self.u64(v);
        }
        self
    }

    pub fn u32s(&mut self, vs: &[u32]) -> &mut Self {
        for &v in vs {
            self.u32(v);
        }
        self
    }

    pub fn ring(&mut self, ring: &RingConfig, v: RingValue) -> &mut Self {
        ring.to_bytes(v, &mut self.buf);
        self
    }

    pub fn rings(&mut self, ring: &RingConfig, vs: &[RingValue]) -> &mut Self {
        self.buf.reserve(vs.len() * ring.byte_len());
        for &v in vs {
            ring.to_bytes(v, &mut self.buf);
        }
        self
    }

    /// 4-byte length prefix followed by the bytes.
    pub fn blob(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError(format!(
                "need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u64s(&mut self, n: usize) -> Result<Vec<u64>, DecodeError> {
        (0..n).map(|_| self.u64()).collect()
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>, DecodeError> {
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn ring(&mut self, ring: &RingConfig) -> Result<RingValue, DecodeError> {
        let bytes = self.take(ring.byte_len())?;
        ring.from_bytes(bytes).map_err(|e| DecodeError(e.to_string()))
    }

    pub fn rings(&mut self, ring: &RingConfig, n: usize) -> Result<Vec<RingValue>, DecodeError> {
        let w = ring.byte_len();
        let bytes = self.take(n * w)?;
        Ok(bytes
            .chunks_exact(w)
            .map(|c| {
                let mut buf = [0u8; 16];
                buf[..w].copy_from_slice(c);
                RingValue(u128::from_le_bytes(buf))
            })
            .collect())
    }

    pub fn blob(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.pos != self.buf.len() {
            return Err(DecodeError(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_mixed() {
        let ring = RingConfig::default();
        let mut w = Writer::default();
        w.u8(7).u32(9).u64(11).rings(&ring, &[RingValue(5), RingValue(u128::MAX)]).blob(b"xy");
        let bytes = w.finish();
        assert_eq!(bytes.len(), 1 + 4 + 8 + 32 + 4 + 2);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 9);
        assert_eq!(r.u64().unwrap(), 11);
        assert_eq!(r.rings(&ring, 2).unwrap(), vec![RingValue(5), RingValue(u128::MAX)]);
        assert_eq!(r.blob().unwrap(), b"xy");
        r.finish().unwrap();
    }

    #[test]
    fn short_input_errors() {
        let mut r = Reader::new(&[1, 2]);
        assert!(r.u32().is_err());
    }
}
