//! Big-endian reader/writer helpers for TLS presentation-language structures.

use crate::error::DecodeError;

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let r = &self.buf[self.pos..];
        self.pos = self.buf.len();
        r
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub fn u24(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(3)?;
        Ok(u32::from_be_bytes([0, b[0], b[1], b[2]]))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u48(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(6)?;
        Ok(u64::from_be_bytes([0, 0, b[0], b[1], b[2], b[3], b[4], b[5]]))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn vec8(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u8()? as usize;
        self.take(n)
    }

    pub fn vec16(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub fn vec24(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u24()? as usize;
        self.take(n)
    }

    /// Requires the reader to be exhausted.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::LengthMismatch)
        }
    }
}

pub trait WriteExt {
    fn put_u8(&mut self, v: u8);
    fn put_u16(&mut self, v: u16);
    fn put_u24(&mut self, v: u32);
    fn put_u32(&mut self, v: u32);
    fn put_u48(&mut self, v: u64);
    fn put_u64(&mut self, v: u64);
    fn put_vec8(&mut self, data: &[u8]);
    fn put_vec16(&mut self, data: &[u8]);
    fn put_vec24(&mut self, data: &[u8]);
    /// Writes a 16-bit length placeholder, runs `f`, then patches the length.
    fn nested16(&mut self, f: impl FnOnce(&mut Vec<u8>));
    fn nested8(&mut self, f: impl FnOnce(&mut Vec<u8>));
    fn nested24(&mut self, f: impl FnOnce(&mut Vec<u8>));
}

impl WriteExt for Vec<u8> {
    fn put_u8(&mut self, v: u8) {
        self.push(v);
    }
    fn put_u16(&mut self, v: u16) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_u24(&mut self, v: u32) {
        self.extend_from_slice(&v.to_be_bytes()[1..]);
    }
    fn put_u32(&mut self, v: u32) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_u48(&mut self, v: u64) {
        self.extend_from_slice(&v.to_be_bytes()[2..]);
    }
    fn put_u64(&mut self, v: u64) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn put_vec8(&mut self, data: &[u8]) {
        debug_assert!(data.len() <= 0xff);
        self.push(data.len() as u8);
        self.extend_from_slice(data);
    }
    fn put_vec16(&mut self, data: &[u8]) {
        debug_assert!(data.len() <= 0xffff);
        self.put_u16(data.len() as u16);
        self.extend_from_slice(data);
    }
    fn put_vec24(&mut self, data: &[u8]) {
        debug_assert!(data.len() <= 0xff_ffff);
        self.put_u24(data.len() as u32);
        self.extend_from_slice(data);
    }
    fn nested16(&mut self, f: impl FnOnce(&mut Vec<u8>)) {
        let at = self.len();
        self.put_u16(0);
        f(self);
        let n = (self.len() - at - 2) as u16;
        self[at..at + 2].copy_from_slice(&n.to_be_bytes());
    }
    fn nested8(&mut self, f: impl FnOnce(&mut Vec<u8>)) {
        let at = self.len();
        self.put_u8(0);
        f(self);
        self[at] = (self.len() - at - 1) as u8;
    }
    fn nested24(&mut self, f: impl FnOnce(&mut Vec<u8>)) {
        let at = self.len();
        self.put_u24(0);
        f(self);
        let n = (self.len() - at - 3) as u32;
        self[at..at + 3].copy_from_slice(&n.to_be_bytes()[1..]);
    }
}
