//! MSB-first bit packing.

use crate::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn with_capacity_bits(bits: u64) -> Self {
        BitWriter {
            bytes: Vec::with_capacity(bits.div_ceil(8) as usize),
            len: 0,
        }
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for b in (0..width).rev() {
            let bit = (value >> b) & 1;
            let pos = self.len % 8;
            if pos == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> pos;
            }
            self.len += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    pub fn read(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.pos / 8;
            let b = *self
                .bytes
                .get(byte as usize)
                .ok_or_else(|| Error::MalformedPayload("truncated payload".into()))?;
            let bit = (b >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        Ok(v)
    }

    /// Fails unless every remaining bit is zero padding inside the last byte.
    pub fn expect_end(&mut self) -> Result<()> {
        let total = self.bytes.len() as u64 * 8;
        if total - self.pos >= 8 {
            return Err(Error::MalformedPayload("trailing bytes".into()));
        }
        while self.pos < total {
            if self.read(1)? != 0 {
                return Err(Error::MalformedPayload("nonzero padding".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_layout() {
        let mut w = BitWriter::default();
        w.write(0b1, 1);
        w.write(0b011, 3);
        w.write(0xABCD, 16);
        assert_eq!(w.bit_len(), 20);
        let bytes = w.finish();
        assert_eq!(bytes, vec![0b1011_1010, 0b1011_1100, 0b1101_0000]);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read(1).unwrap(), 1);
        assert_eq!(r.read(3).unwrap(), 3);
        assert_eq!(r.read(16).unwrap(), 0xABCD);
        r.expect_end().unwrap();
    }

    #[test]
    fn truncated_read_fails() {
        let mut r = BitReader::new(&[0xFF]);
        assert!(r.read(9).is_err());
    }
}
