//! DTLS 1.3 unified-header records and the 13-byte epoch-0 plaintext form.
//!
//! ```text
//!  0 1 2 3 4 5 6 7
//! +-+-+-+-+-+-+-+-+
//! |0|0|1|C|S|L|E E|
//! +-+-+-+-+-+-+-+-+
//! | CID (if C)    |  fixed negotiated length
//! | seq (8 or 16) |  masked on the wire
//! | length (if L) |
//! +---------------+
//! | AEAD ciphertext ...
//! ```

use crate::codec::{Reader, WriteExt};
use crate::crypto::{aead_open, aead_seal, aes_block};
use crate::error::{DecodeError, Error};
use crate::key_schedule::TrafficKeys;
use crate::messages::LEGACY_VERSION_DTLS12;

use super::{inner_plaintext, nonce_for, strip_inner, MAX_CID_LEN, MAX_CIPHERTEXT};

pub const DTLS_PLAINTEXT_HEADER: usize = 13;

const FIXED_BITS: u8 = 0b0010_0000;
const FIXED_MASK: u8 = 0b1110_0000;
const C_BIT: u8 = 0b0001_0000;
const S_BIT: u8 = 0b0000_1000;
const L_BIT: u8 = 0b0000_0100;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DtlsRecordOpts {
    pub cid: Option<Vec<u8>>,
    pub seq_16bit: bool,
    pub length_present: bool,
    pub pad_len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifiedHeader {
    pub cid: Option<Vec<u8>>,
    pub seq_16bit: bool,
    pub length_present: bool,
    pub epoch_low: u8,
    /// Low sequence bits in the clear (the wire carries them masked).
    pub seq_low: u16,
    pub length: Option<u16>,
}

impl UnifiedHeader {
    pub fn first_byte(&self) -> u8 {
        let mut b = FIXED_BITS | (self.epoch_low & 0b11);
        if self.cid.is_some() {
            b |= C_BIT;
        }
        if self.seq_16bit {
            b |= S_BIT;
        }
        if self.length_present {
            b |= L_BIT;
        }
        b
    }

    pub fn seq_len(&self) -> usize {
        if self.seq_16bit {
            2
        } else {
            1
        }
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.cid.as_ref().map_or(0, Vec::len) + self.seq_len() + if self.length_present { 2 } else { 0 }
    }

    /// Offset of the sequence bytes within the encoded header.
    fn seq_offset(&self) -> usize {
        1 + self.cid.as_ref().map_or(0, Vec::len)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.put_u8(self.first_byte());
        if let Some(cid) = &self.cid {
            out.extend_from_slice(cid);
        }
        if self.seq_16bit {
            out.put_u16(self.seq_low);
        } else {
            out.put_u8(self.seq_low as u8);
        }
        if self.length_present {
            out.put_u16(self.length.unwrap_or(0));
        }
        out
    }

    /// Parses a header whose CID, if flagged, has length `cid_len`.
    pub fn parse(bytes: &[u8], cid_len: usize) -> Result<(Self, usize), DecodeError> {
        let mut r = Reader::new(bytes);
        let b = r.u8()?;
        if b & FIXED_MASK != FIXED_BITS {
            return Err(DecodeError::InvalidValue("unified header fixed bits"));
        }
        let cid = if b & C_BIT != 0 { Some(r.take(cid_len)?.to_vec()) } else { None };
        let seq_16bit = b & S_BIT != 0;
        let seq_low = if seq_16bit { r.u16()? } else { r.u8()? as u16 };
        let length_present = b & L_BIT != 0;
        let length = if length_present { Some(r.u16()?) } else { None };
        let h = UnifiedHeader { cid, seq_16bit, length_present, epoch_low: b & 0b11, seq_low, length };
        Ok((h, r.position()))
    }
}

/// Nearest value to `expected` whose low `bits` equal `low`.
pub fn reconstruct_seq(expected: u64, low: u64, bits: u32) -> u64 {
    let win = 1u64 << bits;
    let mask = win - 1;
    let candidate = (expected & !mask) | (low & mask);
    let mut best = candidate;
    let dist = |x: u64| x.abs_diff(expected);
    if candidate >= win && dist(candidate - win) < dist(best) {
        best = candidate - win;
    }
    if let Some(up) = candidate.checked_add(win) {
        if dist(up) < dist(best) {
            best = up;
        }
    }
    best
}

fn seq_mask(keys: &TrafficKeys, ciphertext: &[u8]) -> Result<[u8; 16], Error> {
    let sn_key = keys.sn_key.as_ref().ok_or(Error::InvalidKeyLength)?;
    let sample: [u8; 16] = ciphertext.get(..16).ok_or(Error::ShortCiphertext)?.try_into().expect("16 bytes");
    aes_block(&keys.suite, sn_key, &sample)
}

/// Seals one record at `epoch` with the write counter of `keys`. Returns
/// the wire bytes and the full sequence number used.
pub fn seal_dtls(
    keys: &mut TrafficKeys,
    epoch: u64,
    true_type: u8,
    payload: &[u8],
    opts: &DtlsRecordOpts,
) -> Result<(Vec<u8>, u64), Error> {
    if opts.cid.as_ref().is_some_and(|c| c.len() > MAX_CID_LEN) {
        return Err(Error::Config("connection id longer than 16 bytes".into()));
    }
    let ct_len = payload.len() + 1 + opts.pad_len + keys.suite.tag_len;
    if ct_len > MAX_CIPHERTEXT {
        return Err(Error::RecordOverflow);
    }
    let seq = keys.seq();
    let header = UnifiedHeader {
        cid: opts.cid.clone(),
        seq_16bit: opts.seq_16bit,
        length_present: opts.length_present,
        epoch_low: (epoch & 0b11) as u8,
        seq_low: if opts.seq_16bit { seq as u16 } else { (seq & 0xff) as u16 },
        length: opts.length_present.then_some(ct_len as u16),
    };
    let mut out = header.encode();
    let nonce = nonce_for(&keys.iv, seq);
    let ct = aead_seal(&keys.suite, &keys.key, &nonce, &out, &inner_plaintext(payload, true_type, opts.pad_len))?;
    if ct.len() < 16 {
        return Err(Error::ShortCiphertext);
    }
    let mask = seq_mask(keys, &ct)?;
    let off = header.seq_offset();
    for i in 0..header.seq_len() {
        out[off + i] ^= mask[i];
    }
    keys.next_seq()?;
    out.extend_from_slice(&ct);
    Ok((out, seq))
}

/// 64-record sliding anti-replay window.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayWindow {
    max: Option<u64>,
    /// Bit i set means `max - i` was received.
    bitmap: u64,
}

impl ReplayWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sequence number the window expects next, used for reconstruction.
    pub fn expected(&self) -> u64 {
        self.max.map_or(0, |m| m + 1)
    }

    /// True if `seq` is fresh and inside the window.
    pub fn check(&self, seq: u64) -> bool {
        match self.max {
            None => true,
            Some(m) if seq > m => true,
            Some(m) => {
                let d = m - seq;
                d < 64 && self.bitmap & (1 << d) == 0
            }
        }
    }

    pub fn mark(&mut self, seq: u64) {
        match self.max {
            None => {
                self.max = Some(seq);
                self.bitmap = 1;
            }
            Some(m) if seq > m => {
                let shift = seq - m;
                self.bitmap = if shift >= 64 { 0 } else { self.bitmap << shift };
                self.bitmap |= 1;
                self.max = Some(seq);
            }
            Some(m) => {
                let d = m - seq;
                if d < 64 {
                    self.bitmap |= 1 << d;
                }
            }
        }
    }
}

/// One record sliced out of a datagram, still protected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DtlsRecordSlice<'a> {
    Plaintext { content_type: u8, epoch: u16, seq: u64, payload: &'a [u8], wire_len: usize },
    Ciphertext { header: UnifiedHeader, header_bytes: &'a [u8], ciphertext: &'a [u8], wire_len: usize },
}

impl DtlsRecordSlice<'_> {
    pub fn wire_len(&self) -> usize {
        match self {
            DtlsRecordSlice::Plaintext { wire_len, .. } | DtlsRecordSlice::Ciphertext { wire_len, .. } => *wire_len,
        }
    }
}

pub fn dtls_plaintext_record(content_type: u8, epoch: u16, seq: u64, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DTLS_PLAINTEXT_HEADER + payload.len());
    out.put_u8(content_type);
    out.put_u16(LEGACY_VERSION_DTLS12);
    out.put_u16(epoch);
    out.put_u48(seq);
    out.put_vec16(payload);
    out
}

pub fn parse_dtls_plaintext(bytes: &[u8]) -> Result<(DtlsRecordSlice<'_>, usize), DecodeError> {
    let mut r = Reader::new(bytes);
    let content_type = r.u8()?;
    let _version = r.u16()?;
    let epoch = r.u16()?;
    let seq = r.u48()?;
    let payload = r.vec16()?;
    let used = r.position();
    Ok((DtlsRecordSlice::Plaintext { content_type, epoch, seq, payload, wire_len: used }, used))
}

/// Splits a datagram into records. A unified-header record without a
/// length field runs to the end of the datagram.
pub fn split_datagram(datagram: &[u8], cid_len: usize) -> Result<Vec<DtlsRecordSlice<'_>>, DecodeError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < datagram.len() {
        let rest = &datagram[pos..];
        if rest[0] & FIXED_MASK == FIXED_BITS {
            let (header, hlen) = UnifiedHeader::parse(rest, cid_len)?;
            let body_len = match header.length {
                Some(l) => l as usize,
                None => rest.len() - hlen,
            };
            if rest.len() < hlen + body_len {
                return Err(DecodeError::Truncated);
            }
            out.push(DtlsRecordSlice::Ciphertext {
                header,
                header_bytes: &rest[..hlen],
                ciphertext: &rest[hlen..hlen + body_len],
                wire_len: hlen + body_len,
            });
            pos += hlen + body_len;
        } else {
            let (slice, used) = parse_dtls_plaintext(rest)?;
            out.push(slice);
            pos += used;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DtlsOpened {
    pub seq: u64,
    pub true_type: u8,
    pub payload: Vec<u8>,
}

/// Unmasks the sequence number, reconstructs it against the window,
/// rejects replays, then decrypts. The window is updated only on success.
pub fn open_dtls(
    keys: &TrafficKeys,
    window: &mut ReplayWindow,
    header: &UnifiedHeader,
    header_bytes: &[u8],
    ciphertext: &[u8],
) -> Result<DtlsOpened, Error> {
    if ciphertext.len() < 16 {
        return Err(Error::ShortCiphertext);
    }
    let mask = seq_mask(keys, ciphertext)?;
    let mut aad = header_bytes.to_vec();
    let off = header.seq_offset();
    let seq_len = header.seq_len();
    for i in 0..seq_len {
        aad[off + i] ^= mask[i];
    }
    let low = if header.seq_16bit { u16::from_be_bytes([aad[off], aad[off + 1]]) as u64 } else { aad[off] as u64 };
    let seq = reconstruct_seq(window.expected(), low, 8 * seq_len as u32);
    if !window.check(seq) {
        return Err(Error::ReplayedRecord);
    }
    let nonce = nonce_for(&keys.iv, seq);
    let inner = aead_open(&keys.suite, &keys.key, &nonce, &aad, ciphertext)?;
    let (true_type, payload) = strip_inner(inner)?;
    window.mark(seq);
    Ok(DtlsOpened { seq, true_type, payload })
}
