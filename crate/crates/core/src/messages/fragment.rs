//! DTLS handshake fragmentation and order-insensitive reassembly.

use crate::codec::{Reader, WriteExt};
use crate::error::{DecodeError, Error};

use super::handshake::DTLS_HS_HEADER;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DtlsFragment {
    pub msg_type: u8,
    /// Length of the whole message body.
    pub length: u32,
    pub message_seq: u16,
    pub fragment_offset: u32,
    pub body: Vec<u8>,
}

impl DtlsFragment {
    pub fn fragment_length(&self) -> u32 {
        self.body.len() as u32
    }

    pub fn encoded_len(&self) -> usize {
        DTLS_HS_HEADER + self.body.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.put_u8(self.msg_type);
        out.put_u24(self.length);
        out.put_u16(self.message_seq);
        out.put_u24(self.fragment_offset);
        out.put_vec24(&self.body);
        out
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let msg_type = r.u8()?;
        let length = r.u24()?;
        let message_seq = r.u16()?;
        let fragment_offset = r.u24()?;
        let body = r.vec24()?.to_vec();
        if fragment_offset as u64 + body.len() as u64 > length as u64 {
            return Err(DecodeError::LengthMismatch);
        }
        Ok(DtlsFragment { msg_type, length, message_seq, fragment_offset, body })
    }

    /// True when this fragment carries the whole message.
    pub fn is_whole(&self) -> bool {
        self.fragment_offset == 0 && self.body.len() as u32 == self.length
    }
}

/// Splits a DTLS-framed (unfragmented) handshake message so that every
/// fragment including its 12-byte header fits in `mtu_budget`.
pub fn fragment(msg_bytes: &[u8], mtu_budget: usize) -> Result<Vec<DtlsFragment>, Error> {
    if mtu_budget <= DTLS_HS_HEADER {
        return Err(Error::Config(format!("fragment budget {mtu_budget} leaves no room for payload")));
    }
    let mut r = Reader::new(msg_bytes);
    let whole = DtlsFragment::decode(&mut r)?;
    r.finish()?;
    if !whole.is_whole() {
        return Err(Error::Decode(DecodeError::LengthMismatch));
    }
    let chunk = mtu_budget - DTLS_HS_HEADER;
    if whole.body.is_empty() {
        return Ok(vec![whole]);
    }
    Ok(whole
        .body
        .chunks(chunk)
        .enumerate()
        .map(|(i, piece)| DtlsFragment {
            msg_type: whole.msg_type,
            length: whole.length,
            message_seq: whole.message_seq,
            fragment_offset: (i * chunk) as u32,
            body: piece.to_vec(),
        })
        .collect())
}

/// Reassembly buffer for a single message.
#[derive(Clone, Debug)]
pub struct Reassembly {
    msg_type: u8,
    message_seq: u16,
    buf: Vec<u8>,
    /// Sorted, non-overlapping received byte ranges.
    have: Vec<(usize, usize)>,
}

impl Reassembly {
    pub fn new(first: &DtlsFragment) -> Self {
        Reassembly {
            msg_type: first.msg_type,
            message_seq: first.message_seq,
            buf: vec![0; first.length as usize],
            have: Vec::new(),
        }
    }

    pub fn message_seq(&self) -> u16 {
        self.message_seq
    }

    /// Adds a fragment. Exact or partial duplicates are accepted if their
    /// bytes agree with what was already received.
    pub fn insert(&mut self, frag: &DtlsFragment) -> Result<(), Error> {
        if frag.msg_type != self.msg_type
            || frag.length as usize != self.buf.len()
            || frag.message_seq != self.message_seq
        {
            return Err(Error::InconsistentDuplicate);
        }
        let start = frag.fragment_offset as usize;
        let end = start + frag.body.len();
        if end > self.buf.len() {
            return Err(Error::Decode(DecodeError::LengthMismatch));
        }
        for &(s, e) in &self.have {
            let (os, oe) = (s.max(start), e.min(end));
            if os < oe && self.buf[os..oe] != frag.body[os - start..oe - start] {
                return Err(Error::InconsistentDuplicate);
            }
        }
        self.buf[start..end].copy_from_slice(&frag.body);
        self.have.push((start, end));
        self.have.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(self.have.len());
        for &(s, e) in &self.have {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.have = merged;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.buf.is_empty() || self.have == [(0, self.buf.len())]
    }

    /// Unfragmented DTLS framing of the reassembled message.
    pub fn finish(&self) -> Result<Vec<u8>, Error> {
        if !self.is_complete() {
            return Err(Error::GapOnFlush);
        }
        Ok(DtlsFragment {
            msg_type: self.msg_type,
            length: self.buf.len() as u32,
            message_seq: self.message_seq,
            fragment_offset: 0,
            body: self.buf.clone(),
        }
        .encode())
    }
}

/// Reassembles fragments of one message in any order.
pub fn reassemble(fragments: &[DtlsFragment]) -> Result<Vec<u8>, Error> {
    let first = fragments.first().ok_or(Error::GapOnFlush)?;
    let mut r = Reassembly::new(first);
    for f in fragments {
        r.insert(f)?;
    }
    r.finish()
}
