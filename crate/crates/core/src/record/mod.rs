//! Record protection for TLS 1.3 and DTLS 1.3, plus the header-size model
//! of the 1.2 record formats.

mod dtls;
mod tls;

pub use dtls::{
    dtls_plaintext_record, open_dtls, parse_dtls_plaintext, reconstruct_seq, seal_dtls, split_datagram, DtlsOpened,
    DtlsRecordOpts, DtlsRecordSlice, ReplayWindow, UnifiedHeader, DTLS_PLAINTEXT_HEADER,
};
pub use tls::{ccs_record, open_tls, plaintext_record, seal_tls, split_stream, TlsRecord, TLS_HEADER};

use crate::error::Error;

pub const MAX_CID_LEN: usize = 16;

/// Upper bound on protected fragment length (2^14 + 256).
pub const MAX_CIPHERTEXT: usize = (1 << 14) + 256;

pub mod content_type {
    pub const CHANGE_CIPHER_SPEC: u8 = 20;
    pub const ALERT: u8 = 21;
    pub const HANDSHAKE: u8 = 22;
    pub const APPLICATION_DATA: u8 = 23;
    pub const ACK: u8 = 26;
}

pub fn content_type_name(t: u8) -> &'static str {
    match t {
        content_type::CHANGE_CIPHER_SPEC => "change_cipher_spec",
        content_type::ALERT => "alert",
        content_type::HANDSHAKE => "handshake",
        content_type::APPLICATION_DATA => "application_data",
        content_type::ACK => "ack",
        _ => "unknown",
    }
}

/// iv XOR the big-endian sequence number, left-padded to the iv length.
pub fn nonce_for(iv: &[u8], seq: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n.copy_from_slice(&iv[..12]);
    for (b, s) in n[4..].iter_mut().zip(seq.to_be_bytes()) {
        *b ^= s;
    }
    n
}

pub(crate) fn inner_plaintext(payload: &[u8], true_type: u8, pad_len: usize) -> Vec<u8> {
    let mut v = Vec::with_capacity(payload.len() + 1 + pad_len);
    v.extend_from_slice(payload);
    v.push(true_type);
    v.resize(payload.len() + 1 + pad_len, 0);
    v
}

/// Strips zero padding; the last nonzero byte is the content type.
pub(crate) fn strip_inner(mut inner: Vec<u8>) -> Result<(u8, Vec<u8>), Error> {
    while inner.last() == Some(&0) {
        inner.pop();
    }
    let t = inner.pop().ok_or(Error::AllZeroInner)?;
    Ok((t, inner))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeaderVersion {
    Tls12,
    Dtls12,
    Tls13,
    /// 8-bit seq, no CID, no length.
    Dtls13Min,
    /// 8-bit seq, 4-byte CID, length present.
    Dtls13Max,
}

pub fn legacy_header_sizes(v: HeaderVersion) -> usize {
    match v {
        HeaderVersion::Tls12 | HeaderVersion::Tls13 => TLS_HEADER,
        HeaderVersion::Dtls12 => DTLS_PLAINTEXT_HEADER,
        HeaderVersion::Dtls13Min => 2,
        HeaderVersion::Dtls13Max => 8,
    }
}
