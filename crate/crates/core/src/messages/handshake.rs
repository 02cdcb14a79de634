use crate::codec::{Reader, WriteExt};
use crate::crypto::{SignatureScheme, SuiteId};
use crate::error::DecodeError;
use crate::Protocol;

use super::extensions::{decode_extensions, encode_extensions, ExtContext, Extension};

/// Header sizes of a handshake message in each framing.
pub const TLS_HS_HEADER: usize = 4;
pub const DTLS_HS_HEADER: usize = 12;

pub const LEGACY_VERSION_TLS12: u16 = 0x0303;
pub const LEGACY_VERSION_DTLS12: u16 = 0xfefd;

/// SHA-256("HelloRetryRequest"), the ServerHello.random of every HRR.
pub const HRR_RANDOM: [u8; 32] = [
    0xcf, 0x21, 0xad, 0x74, 0xe5, 0x9a, 0x61, 0x11, 0xbe, 0x1d, 0x8c, 0x02, 0x1e, 0x65, 0xb8, 0x91, 0xc2, 0xa2, 0x11,
    0x16, 0x7a, 0xbb, 0x8c, 0x5e, 0x07, 0x9e, 0x09, 0xe2, 0xc8, 0xa8, 0x33, 0x9c,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HandshakeType {
    ClientHello,
    ServerHello,
    NewSessionTicket,
    EndOfEarlyData,
    EncryptedExtensions,
    Certificate,
    CertificateRequest,
    CertificateVerify,
    Finished,
    MessageHash,
}

impl HandshakeType {
    pub fn code(self) -> u8 {
        match self {
            HandshakeType::ClientHello => 1,
            HandshakeType::ServerHello => 2,
            HandshakeType::NewSessionTicket => 4,
            HandshakeType::EndOfEarlyData => 5,
            HandshakeType::EncryptedExtensions => 8,
            HandshakeType::Certificate => 11,
            HandshakeType::CertificateRequest => 13,
            HandshakeType::CertificateVerify => 15,
            HandshakeType::Finished => 20,
            HandshakeType::MessageHash => 254,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, DecodeError> {
        Ok(match code {
            1 => HandshakeType::ClientHello,
            2 => HandshakeType::ServerHello,
            4 => HandshakeType::NewSessionTicket,
            5 => HandshakeType::EndOfEarlyData,
            8 => HandshakeType::EncryptedExtensions,
            11 => HandshakeType::Certificate,
            13 => HandshakeType::CertificateRequest,
            15 => HandshakeType::CertificateVerify,
            20 => HandshakeType::Finished,
            254 => HandshakeType::MessageHash,
            other => return Err(DecodeError::UnknownType(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            HandshakeType::ClientHello => "ClientHello",
            HandshakeType::ServerHello => "ServerHello",
            HandshakeType::NewSessionTicket => "NewSessionTicket",
            HandshakeType::EndOfEarlyData => "EndOfEarlyData",
            HandshakeType::EncryptedExtensions => "EncryptedExtensions",
            HandshakeType::Certificate => "Certificate",
            HandshakeType::CertificateRequest => "CertificateRequest",
            HandshakeType::CertificateVerify => "CertificateVerify",
            HandshakeType::Finished => "Finished",
            HandshakeType::MessageHash => "MessageHash",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientHello {
    pub legacy_version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    /// Present (and empty) only in DTLS.
    pub legacy_cookie: Option<Vec<u8>>,
    pub cipher_suites: Vec<SuiteId>,
    pub compression_methods: Vec<u8>,
    pub extensions: Vec<Extension>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerHello {
    pub legacy_version: u16,
    pub random: [u8; 32],
    pub session_id: Vec<u8>,
    pub cipher_suite: SuiteId,
    pub compression_method: u8,
    pub extensions: Vec<Extension>,
}

impl ServerHello {
    pub fn is_hello_retry_request(&self) -> bool {
        self.random == HRR_RANDOM
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NewSessionTicket {
    pub lifetime: u32,
    pub age_add: u32,
    pub nonce: Vec<u8>,
    pub ticket: Vec<u8>,
    pub extensions: Vec<Extension>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateEntry {
    pub data: Vec<u8>,
    pub extensions: Vec<Extension>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificatePayload {
    pub context: Vec<u8>,
    pub entries: Vec<CertificateEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateRequest {
    pub context: Vec<u8>,
    pub extensions: Vec<Extension>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateVerify {
    pub scheme: SignatureScheme,
    pub signature: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HandshakeMessage {
    ClientHello(ClientHello),
    /// Also carries HelloRetryRequest (sentinel random).
    ServerHello(ServerHello),
    NewSessionTicket(NewSessionTicket),
    EndOfEarlyData,
    EncryptedExtensions(Vec<Extension>),
    Certificate(CertificatePayload),
    CertificateRequest(CertificateRequest),
    CertificateVerify(CertificateVerify),
    Finished(Vec<u8>),
    MessageHash(Vec<u8>),
}

impl HandshakeMessage {
    pub fn msg_type(&self) -> HandshakeType {
        match self {
            HandshakeMessage::ClientHello(_) => HandshakeType::ClientHello,
            HandshakeMessage::ServerHello(_) => HandshakeType::ServerHello,
            HandshakeMessage::NewSessionTicket(_) => HandshakeType::NewSessionTicket,
            HandshakeMessage::EndOfEarlyData => HandshakeType::EndOfEarlyData,
            HandshakeMessage::EncryptedExtensions(_) => HandshakeType::EncryptedExtensions,
            HandshakeMessage::Certificate(_) => HandshakeType::Certificate,
            HandshakeMessage::CertificateRequest(_) => HandshakeType::CertificateRequest,
            HandshakeMessage::CertificateVerify(_) => HandshakeType::CertificateVerify,
            HandshakeMessage::Finished(_) => HandshakeType::Finished,
            HandshakeMessage::MessageHash(_) => HandshakeType::MessageHash,
        }
    }

    /// Display name; distinguishes HelloRetryRequest from ServerHello.
    pub fn name(&self) -> &'static str {
        match self {
            HandshakeMessage::ServerHello(sh) if sh.is_hello_retry_request() => "HelloRetryRequest",
            m => m.msg_type().name(),
        }
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            HandshakeMessage::ClientHello(ch) => {
                out.put_u16(ch.legacy_version);
                out.extend_from_slice(&ch.random);
                out.put_vec8(&ch.session_id);
                if let Some(cookie) = &ch.legacy_cookie {
                    out.put_vec8(cookie);
                }
                out.nested16(|w| {
                    for s in &ch.cipher_suites {
                        w.put_u16(s.0);
                    }
                });
                out.put_vec8(&ch.compression_methods);
                encode_extensions(&ch.extensions, &mut out);
            }
            HandshakeMessage::ServerHello(sh) => {
                out.put_u16(sh.legacy_version);
                out.extend_from_slice(&sh.random);
                out.put_vec8(&sh.session_id);
                out.put_u16(sh.cipher_suite.0);
                out.put_u8(sh.compression_method);
                encode_extensions(&sh.extensions, &mut out);
            }
            HandshakeMessage::NewSessionTicket(t) => {
                out.put_u32(t.lifetime);
                out.put_u32(t.age_add);
                out.put_vec8(&t.nonce);
                out.put_vec16(&t.ticket);
                encode_extensions(&t.extensions, &mut out);
            }
            HandshakeMessage::EndOfEarlyData => {}
            HandshakeMessage::EncryptedExtensions(exts) => encode_extensions(exts, &mut out),
            HandshakeMessage::Certificate(c) => {
                out.put_vec8(&c.context);
                out.nested24(|w| {
                    for e in &c.entries {
                        w.put_vec24(&e.data);
                        encode_extensions(&e.extensions, w);
                    }
                });
            }
            HandshakeMessage::CertificateRequest(cr) => {
                out.put_vec8(&cr.context);
                encode_extensions(&cr.extensions, &mut out);
            }
            HandshakeMessage::CertificateVerify(cv) => {
                out.put_u16(cv.scheme.0);
                out.put_vec16(&cv.signature);
            }
            HandshakeMessage::Finished(mac) => out.extend_from_slice(mac),
            HandshakeMessage::MessageHash(h) => out.extend_from_slice(h),
        }
        out
    }

    /// `type ‖ uint24 length ‖ body`: the framing fed into the transcript.
    pub fn encode_tls(&self) -> Vec<u8> {
        let body = self.encode_body();
        let mut out = Vec::with_capacity(TLS_HS_HEADER + body.len());
        out.put_u8(self.msg_type().code());
        out.put_vec24(&body);
        out
    }

    pub fn decode_body(msg_type: HandshakeType, body: &[u8], protocol: Protocol) -> Result<Self, DecodeError> {
        let mut r = Reader::new(body);
        let msg = match msg_type {
            HandshakeType::ClientHello => {
                let legacy_version = r.u16()?;
                let random = r.take(32)?.try_into().expect("32 bytes");
                let session_id = r.vec8()?.to_vec();
                if session_id.len() > 32 {
                    return Err(DecodeError::InvalidValue("legacy_session_id"));
                }
                let legacy_cookie = match protocol {
                    Protocol::Dtls => Some(r.vec8()?.to_vec()),
                    Protocol::Tls => None,
                };
                let suites = r.vec16()?;
                if suites.len() % 2 != 0 || suites.is_empty() {
                    return Err(DecodeError::InvalidValue("cipher_suites"));
                }
                let cipher_suites = suites.chunks_exact(2).map(|c| SuiteId(u16::from_be_bytes([c[0], c[1]]))).collect();
                let compression_methods = r.vec8()?.to_vec();
                let extensions = decode_extensions(&mut r, ExtContext::ClientHello)?;
                HandshakeMessage::ClientHello(ClientHello {
                    legacy_version,
                    random,
                    session_id,
                    legacy_cookie,
                    cipher_suites,
                    compression_methods,
                    extensions,
                })
            }
            HandshakeType::ServerHello => {
                let legacy_version = r.u16()?;
                let random: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
                let session_id = r.vec8()?.to_vec();
                if session_id.len() > 32 {
                    return Err(DecodeError::InvalidValue("legacy_session_id"));
                }
                let cipher_suite = SuiteId(r.u16()?);
                let compression_method = r.u8()?;
                let ctx = if random == HRR_RANDOM { ExtContext::HelloRetryRequest } else { ExtContext::ServerHello };
                let extensions = decode_extensions(&mut r, ctx)?;
                HandshakeMessage::ServerHello(ServerHello {
                    legacy_version,
                    random,
                    session_id,
                    cipher_suite,
                    compression_method,
                    extensions,
                })
            }
            HandshakeType::NewSessionTicket => {
                let lifetime = r.u32()?;
                let age_add = r.u32()?;
                let nonce = r.vec8()?.to_vec();
                let ticket = r.vec16()?.to_vec();
                if ticket.is_empty() {
                    return Err(DecodeError::InvalidValue("ticket"));
                }
                let extensions = decode_extensions(&mut r, ExtContext::NewSessionTicket)?;
                HandshakeMessage::NewSessionTicket(NewSessionTicket { lifetime, age_add, nonce, ticket, extensions })
            }
            HandshakeType::EndOfEarlyData => HandshakeMessage::EndOfEarlyData,
            HandshakeType::EncryptedExtensions => {
                HandshakeMessage::EncryptedExtensions(decode_extensions(&mut r, ExtContext::EncryptedExtensions)?)
            }
            HandshakeType::Certificate => {
                let context = r.vec8()?.to_vec();
                let mut list = Reader::new(r.vec24()?);
                let mut entries = Vec::new();
                while !list.is_empty() {
                    let data = list.vec24()?.to_vec();
                    if data.is_empty() {
                        return Err(DecodeError::InvalidValue("cert_data"));
                    }
                    let extensions = decode_extensions(&mut list, ExtContext::Certificate)?;
                    entries.push(CertificateEntry { data, extensions });
                }
                HandshakeMessage::Certificate(CertificatePayload { context, entries })
            }
            HandshakeType::CertificateRequest => {
                let context = r.vec8()?.to_vec();
                let extensions = decode_extensions(&mut r, ExtContext::CertificateRequest)?;
                HandshakeMessage::CertificateRequest(CertificateRequest { context, extensions })
            }
            HandshakeType::CertificateVerify => {
                let scheme = SignatureScheme(r.u16()?);
                let signature = r.vec16()?.to_vec();
                HandshakeMessage::CertificateVerify(CertificateVerify { scheme, signature })
            }
            HandshakeType::Finished => HandshakeMessage::Finished(r.rest().to_vec()),
            HandshakeType::MessageHash => HandshakeMessage::MessageHash(r.rest().to_vec()),
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Frames a message for the wire. DTLS always carries the 12-byte fragment
/// header, with offset 0 and fragment_length = length when unfragmented.
pub fn encode_handshake(msg: &HandshakeMessage, protocol: Protocol, message_seq: u16) -> Vec<u8> {
    let body = msg.encode_body();
    frame_body(msg.msg_type().code(), &body, protocol, message_seq)
}

pub(crate) fn frame_body(msg_type: u8, body: &[u8], protocol: Protocol, message_seq: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(DTLS_HS_HEADER + body.len());
    out.put_u8(msg_type);
    out.put_u24(body.len() as u32);
    if protocol == Protocol::Dtls {
        out.put_u16(message_seq);
        out.put_u24(0);
        out.put_u24(body.len() as u32);
    }
    out.extend_from_slice(body);
    out
}

/// Decodes one complete handshake message. For DTLS the message must be
/// unfragmented; the returned sequence number is `None` for TLS.
pub fn decode_handshake(bytes: &[u8], protocol: Protocol) -> Result<(HandshakeMessage, Option<u16>), DecodeError> {
    let mut r = Reader::new(bytes);
    let t = r.u8()?;
    let len = r.u24()? as usize;
    let seq = match protocol {
        Protocol::Tls => None,
        Protocol::Dtls => {
            let seq = r.u16()?;
            let off = r.u24()?;
            let flen = r.u24()? as usize;
            if off != 0 || flen != len {
                return Err(DecodeError::LengthMismatch);
            }
            Some(seq)
        }
    };
    let msg_type = HandshakeType::from_code(t)?;
    let body = r.take(len)?;
    r.finish()?;
    Ok((HandshakeMessage::decode_body(msg_type, body, protocol)?, seq))
}

/// Strips the DTLS-only fields (message_seq, fragment offset/length) so the
/// message can be hashed exactly like its TLS counterpart.
pub fn dtls_to_tls_form(bytes: &[u8]) -> Result<Vec<u8>, DecodeError> {
    if bytes.len() < DTLS_HS_HEADER {
        return Err(DecodeError::Truncated);
    }
    let mut out = Vec::with_capacity(bytes.len() - 8);
    out.extend_from_slice(&bytes[..4]);
    out.extend_from_slice(&bytes[DTLS_HS_HEADER..]);
    Ok(out)
}

/// One line of the hex transcript dump:
/// `<direction> <msg_type_name> <length> <hex>`.
pub fn dump_line(direction: &str, msg: &HandshakeMessage) -> String {
    let bytes = msg.encode_tls();
    format!("{direction} {} {} {}", msg.name(), bytes.len(), hex::encode(&bytes))
}
