use crate::codec::{Reader, WriteExt};
use crate::crypto::{aead_open, aead_seal};
use crate::error::{DecodeError, Error};
use crate::key_schedule::TrafficKeys;
use crate::messages::LEGACY_VERSION_TLS12;

use super::{content_type, inner_plaintext, nonce_for, strip_inner, MAX_CIPHERTEXT};

pub const TLS_HEADER: usize = 5;

/// A TLS record as framed on the stream, before deprotection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlsRecord {
    pub outer_type: u8,
    pub version: u16,
    pub fragment: Vec<u8>,
}

impl TlsRecord {
    pub fn wire_len(&self) -> usize {
        TLS_HEADER + self.fragment.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.put_u8(self.outer_type);
        out.put_u16(self.version);
        out.put_vec16(&self.fragment);
        out
    }
}

pub fn plaintext_record(ctype: u8, payload: &[u8]) -> Vec<u8> {
    TlsRecord { outer_type: ctype, version: LEGACY_VERSION_TLS12, fragment: payload.to_vec() }.encode()
}

/// The middlebox-compatibility ChangeCipherSpec record.
pub fn ccs_record() -> Vec<u8> {
    plaintext_record(content_type::CHANGE_CIPHER_SPEC, &[1])
}

pub fn seal_tls(keys: &mut TrafficKeys, true_type: u8, payload: &[u8], pad_len: usize) -> Result<Vec<u8>, Error> {
    let ct_len = payload.len() + 1 + pad_len + keys.suite.tag_len;
    if ct_len > MAX_CIPHERTEXT {
        return Err(Error::RecordOverflow);
    }
    let mut header = Vec::with_capacity(TLS_HEADER);
    header.put_u8(content_type::APPLICATION_DATA);
    header.put_u16(LEGACY_VERSION_TLS12);
    header.put_u16(ct_len as u16);
    let seq = keys.seq();
    let nonce = nonce_for(&keys.iv, seq);
    let ct = aead_seal(&keys.suite, &keys.key, &nonce, &header, &inner_plaintext(payload, true_type, pad_len))?;
    keys.next_seq()?;
    header.extend_from_slice(&ct);
    Ok(header)
}

/// Deprotects one complete record. The read counter moves only on success.
pub fn open_tls(keys: &mut TrafficKeys, wire: &[u8]) -> Result<(u8, Vec<u8>), Error> {
    let mut r = Reader::new(wire);
    let outer = r.u8()?;
    let _version = r.u16()?;
    let fragment = r.vec16()?;
    r.finish()?;
    if outer != content_type::APPLICATION_DATA {
        return Err(Error::BadOuterType(outer));
    }
    if fragment.len() > MAX_CIPHERTEXT {
        return Err(Error::RecordOverflow);
    }
    let nonce = nonce_for(&keys.iv, keys.seq());
    let inner = aead_open(&keys.suite, &keys.key, &nonce, &wire[..TLS_HEADER], fragment)?;
    let opened = strip_inner(inner)?;
    keys.next_seq()?;
    Ok(opened)
}

/// Pulls every complete record off the front of a stream buffer and
/// returns them with the number of bytes consumed.
pub fn split_stream(buf: &[u8]) -> Result<(Vec<TlsRecord>, usize), Error> {
    let mut out = Vec::new();
    let mut pos = 0;
    while buf.len() - pos >= TLS_HEADER {
        let len = u16::from_be_bytes([buf[pos + 3], buf[pos + 4]]) as usize;
        if len > MAX_CIPHERTEXT {
            return Err(Error::RecordOverflow);
        }
        if buf.len() - pos < TLS_HEADER + len {
            break;
        }
        let mut r = Reader::new(&buf[pos..pos + TLS_HEADER + len]);
        let outer_type = r.u8().map_err(Error::from)?;
        let version = r.u16().map_err(Error::from)?;
        let fragment = r.vec16().map_err(Error::from)?.to_vec();
        if version >> 8 != 0x03 {
            return Err(Error::Decode(DecodeError::InvalidValue("record version")));
        }
        out.push(TlsRecord { outer_type, version, fragment });
        pos += TLS_HEADER + len;
    }
    Ok((out, pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SuiteId;
    use crate::key_schedule::traffic_keys;
    use crate::Protocol;

    fn keys() -> TrafficKeys {
        traffic_keys(&[7; 32], SuiteId::AES_128_CCM_SHA256.params().unwrap(), Protocol::Tls).unwrap()
    }

    #[test]
    fn lengths_and_round_trip() {
        let (mut w, mut r) = (keys(), keys());
        let rec = seal_tls(&mut w, content_type::APPLICATION_DATA, &[0x42; 100], 0).unwrap();
        assert_eq!(rec.len(), 122);
        assert_eq!(&rec[..3], &[0x17, 0x03, 0x03]);
        let padded = seal_tls(&mut w, content_type::HANDSHAKE, &[0x42; 100], 10).unwrap();
        assert_eq!(padded.len(), 132);
        assert_eq!(padded[0], 0x17);
        assert_eq!(open_tls(&mut r, &rec).unwrap(), (23, vec![0x42; 100]));
        assert_eq!(open_tls(&mut r, &padded).unwrap(), (22, vec![0x42; 100]));
        assert_eq!(r.seq(), 2);
    }

    #[test]
    fn tamper_leaves_counter() {
        let (mut w, mut r) = (keys(), keys());
        let mut rec = seal_tls(&mut w, 23, b"x", 0).unwrap();
        let n = rec.len();
        rec[n - 1] ^= 1;
        assert_eq!(open_tls(&mut r, &rec), Err(Error::AuthenticationFailure));
        assert_eq!(r.seq(), 0);
    }

    #[test]
    fn all_zero_inner_rejected() {
        let (mut w, mut r) = (keys(), keys());
        // an inner plaintext of only padding: seal an empty payload with type 0
        let rec = seal_tls(&mut w, 0, &[], 3).unwrap();
        assert_eq!(open_tls(&mut r, &rec), Err(Error::AllZeroInner));
    }

    #[test]
    fn outer_type_and_overflow() {
        let mut r = keys();
        assert_eq!(open_tls(&mut r, &ccs_record()), Err(Error::BadOuterType(20)));
        let mut w = keys();
        assert_eq!(seal_tls(&mut w, 23, &vec![0; 1 << 14], 300), Err(Error::RecordOverflow));
    }

    #[test]
    fn stream_split_partial() {
        let mut w = keys();
        let mut buf = plaintext_record(22, &[1, 2, 3]);
        buf.extend(ccs_record());
        buf.extend(seal_tls(&mut w, 23, b"abc", 0).unwrap());
        let full = buf.len();
        buf.extend_from_slice(&[0x17, 0x03]);
        let (recs, used) = split_stream(&buf).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(used, full);
        assert_eq!(recs[1].encode(), ccs_record());
    }
}
