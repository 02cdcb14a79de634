use crate::codec::{Reader, WriteExt};
use crate::crypto::{NamedGroup, SignatureScheme};
use crate::error::DecodeError;

pub const VERSION_TLS13: u16 = 0x0304;
pub const VERSION_DTLS13: u16 = 0xfefc;

pub const PSK_KE: u8 = 0;
pub const PSK_DHE_KE: u8 = 1;

/// Extension code points.
pub mod ext_type {
    pub const SERVER_NAME: u16 = 0;
    pub const SUPPORTED_GROUPS: u16 = 10;
    pub const SIGNATURE_ALGORITHMS: u16 = 13;
    pub const PRE_SHARED_KEY: u16 = 41;
    pub const EARLY_DATA: u16 = 42;
    pub const SUPPORTED_VERSIONS: u16 = 43;
    pub const COOKIE: u16 = 44;
    pub const PSK_KEY_EXCHANGE_MODES: u16 = 45;
    pub const KEY_SHARE: u16 = 51;
    pub const CONNECTION_ID: u16 = 54;
}

/// Which message an extension block belongs to; several extensions change
/// shape depending on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtContext {
    ClientHello,
    ServerHello,
    HelloRetryRequest,
    EncryptedExtensions,
    NewSessionTicket,
    CertificateRequest,
    Certificate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyShareEntry {
    pub group: NamedGroup,
    pub key_exchange: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PskIdentity {
    pub identity: Vec<u8>,
    pub obfuscated_ticket_age: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PskOffer {
    pub identities: Vec<PskIdentity>,
    pub binders: Vec<Vec<u8>>,
}

impl PskOffer {
    /// Encoded size of the binders list, including its length prefix.
    pub fn binders_len(&self) -> usize {
        2 + self.binders.iter().map(|b| 1 + b.len()).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extension {
    ServerName(String),
    SupportedGroups(Vec<NamedGroup>),
    SignatureAlgorithms(Vec<SignatureScheme>),
    PreSharedKeyOffer(PskOffer),
    PreSharedKeySelected(u16),
    EarlyData,
    EarlyDataMax(u32),
    SupportedVersionsOffer(Vec<u16>),
    SupportedVersionsSelected(u16),
    Cookie(Vec<u8>),
    PskKeyExchangeModes(Vec<u8>),
    KeyShareOffer(Vec<KeyShareEntry>),
    KeyShareSelected(KeyShareEntry),
    KeyShareRetry(NamedGroup),
    ConnectionId(Vec<u8>),
    Unknown { ext_type: u16, data: Vec<u8> },
}

impl Extension {
    pub fn ext_type(&self) -> u16 {
        use ext_type::*;
        match self {
            Extension::ServerName(_) => SERVER_NAME,
            Extension::SupportedGroups(_) => SUPPORTED_GROUPS,
            Extension::SignatureAlgorithms(_) => SIGNATURE_ALGORITHMS,
            Extension::PreSharedKeyOffer(_) | Extension::PreSharedKeySelected(_) => PRE_SHARED_KEY,
            Extension::EarlyData | Extension::EarlyDataMax(_) => EARLY_DATA,
            Extension::SupportedVersionsOffer(_) | Extension::SupportedVersionsSelected(_) => SUPPORTED_VERSIONS,
            Extension::Cookie(_) => COOKIE,
            Extension::PskKeyExchangeModes(_) => PSK_KEY_EXCHANGE_MODES,
            Extension::KeyShareOffer(_) | Extension::KeyShareSelected(_) | Extension::KeyShareRetry(_) => KEY_SHARE,
            Extension::ConnectionId(_) => CONNECTION_ID,
            Extension::Unknown { ext_type, .. } => *ext_type,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.ext_type() {
            ext_type::SERVER_NAME => "server_name",
            ext_type::SUPPORTED_GROUPS => "supported_groups",
            ext_type::SIGNATURE_ALGORITHMS => "signature_algorithms",
            ext_type::PRE_SHARED_KEY => "pre_shared_key",
            ext_type::EARLY_DATA => "early_data",
            ext_type::SUPPORTED_VERSIONS => "supported_versions",
            ext_type::COOKIE => "cookie",
            ext_type::PSK_KEY_EXCHANGE_MODES => "psk_key_exchange_modes",
            ext_type::KEY_SHARE => "key_share",
            ext_type::CONNECTION_ID => "connection_id",
            _ => "unknown",
        }
    }

    fn encode_data(&self, out: &mut Vec<u8>) {
        match self {
            Extension::ServerName(name) => out.nested16(|w| {
                w.put_u8(0);
                w.put_vec16(name.as_bytes());
            }),
            Extension::SupportedGroups(groups) => out.nested16(|w| {
                for g in groups {
                    w.put_u16(g.0);
                }
            }),
            Extension::SignatureAlgorithms(schemes) => out.nested16(|w| {
                for s in schemes {
                    w.put_u16(s.0);
                }
            }),
            Extension::PreSharedKeyOffer(offer) => {
                out.nested16(|w| {
                    for id in &offer.identities {
                        w.put_vec16(&id.identity);
                        w.put_u32(id.obfuscated_ticket_age);
                    }
                });
                out.nested16(|w| {
                    for b in &offer.binders {
                        w.put_vec8(b);
                    }
                });
            }
            Extension::PreSharedKeySelected(idx) => out.put_u16(*idx),
            Extension::EarlyData => {}
            Extension::EarlyDataMax(max) => out.put_u32(*max),
            Extension::SupportedVersionsOffer(versions) => out.nested8(|w| {
                for v in versions {
                    w.put_u16(*v);
                }
            }),
            Extension::SupportedVersionsSelected(v) => out.put_u16(*v),
            Extension::Cookie(c) => out.put_vec16(c),
            Extension::PskKeyExchangeModes(modes) => out.put_vec8(modes),
            Extension::KeyShareOffer(entries) => out.nested16(|w| {
                for e in entries {
                    w.put_u16(e.group.0);
                    w.put_vec16(&e.key_exchange);
                }
            }),
            Extension::KeyShareSelected(e) => {
                out.put_u16(e.group.0);
                out.put_vec16(&e.key_exchange);
            }
            Extension::KeyShareRetry(g) => out.put_u16(g.0),
            Extension::ConnectionId(cid) => out.put_vec8(cid),
            Extension::Unknown { data, .. } => out.extend_from_slice(data),
        }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.put_u16(self.ext_type());
        out.nested16(|w| self.encode_data(w));
    }

    pub fn decode(ext: u16, data: &[u8], ctx: ExtContext) -> Result<Extension, DecodeError> {
        use ext_type::*;
        use ExtContext as C;
        let mut r = Reader::new(data);
        let parsed = match (ext, ctx) {
            (SERVER_NAME, C::ClientHello) => {
                let mut list = Reader::new(r.vec16()?);
                if list.u8()? != 0 {
                    return Err(DecodeError::InvalidValue("server_name type"));
                }
                let name = list.vec16()?;
                list.finish()?;
                let name = std::str::from_utf8(name).map_err(|_| DecodeError::InvalidValue("server_name"))?;
                Extension::ServerName(name.to_owned())
            }
            (SUPPORTED_GROUPS, C::ClientHello | C::EncryptedExtensions) => {
                Extension::SupportedGroups(u16_list(r.vec16()?)?.into_iter().map(NamedGroup).collect())
            }
            (SIGNATURE_ALGORITHMS, C::ClientHello | C::CertificateRequest) => {
                Extension::SignatureAlgorithms(u16_list(r.vec16()?)?.into_iter().map(SignatureScheme).collect())
            }
            (PRE_SHARED_KEY, C::ClientHello) => {
                let mut ids = Reader::new(r.vec16()?);
                let mut identities = Vec::new();
                while !ids.is_empty() {
                    let identity = ids.vec16()?.to_vec();
                    let obfuscated_ticket_age = ids.u32()?;
                    identities.push(PskIdentity { identity, obfuscated_ticket_age });
                }
                let mut bs = Reader::new(r.vec16()?);
                let mut binders = Vec::new();
                while !bs.is_empty() {
                    binders.push(bs.vec8()?.to_vec());
                }
                if identities.is_empty() || identities.len() != binders.len() {
                    return Err(DecodeError::InvalidValue("pre_shared_key"));
                }
                Extension::PreSharedKeyOffer(PskOffer { identities, binders })
            }
            (PRE_SHARED_KEY, C::ServerHello) => Extension::PreSharedKeySelected(r.u16()?),
            (EARLY_DATA, C::ClientHello | C::EncryptedExtensions) => Extension::EarlyData,
            (EARLY_DATA, C::NewSessionTicket) => Extension::EarlyDataMax(r.u32()?),
            (SUPPORTED_VERSIONS, C::ClientHello) => {
                let list = r.vec8()?;
                if list.len() % 2 != 0 || list.is_empty() {
                    return Err(DecodeError::InvalidValue("supported_versions"));
                }
                Extension::SupportedVersionsOffer(u16_list(list)?)
            }
            (SUPPORTED_VERSIONS, C::ServerHello | C::HelloRetryRequest) => {
                Extension::SupportedVersionsSelected(r.u16()?)
            }
            (COOKIE, C::ClientHello | C::HelloRetryRequest) => {
                let c = r.vec16()?;
                if c.is_empty() {
                    return Err(DecodeError::InvalidValue("cookie"));
                }
                Extension::Cookie(c.to_vec())
            }
            (PSK_KEY_EXCHANGE_MODES, C::ClientHello) => {
                let m = r.vec8()?;
                if m.is_empty() {
                    return Err(DecodeError::InvalidValue("psk_key_exchange_modes"));
                }
                Extension::PskKeyExchangeModes(m.to_vec())
            }
            (KEY_SHARE, C::ClientHello) => {
                let mut list = Reader::new(r.vec16()?);
                let mut entries = Vec::new();
                while !list.is_empty() {
                    let group = NamedGroup(list.u16()?);
                    let key_exchange = list.vec16()?.to_vec();
                    if key_exchange.is_empty() {
                        return Err(DecodeError::InvalidValue("key_share"));
                    }
                    entries.push(KeyShareEntry { group, key_exchange });
                }
                Extension::KeyShareOffer(entries)
            }
            (KEY_SHARE, C::ServerHello) => {
                let group = NamedGroup(r.u16()?);
                let key_exchange = r.vec16()?.to_vec();
                if key_exchange.is_empty() {
                    return Err(DecodeError::InvalidValue("key_share"));
                }
                Extension::KeyShareSelected(KeyShareEntry { group, key_exchange })
            }
            (KEY_SHARE, C::HelloRetryRequest) => Extension::KeyShareRetry(NamedGroup(r.u16()?)),
            (CONNECTION_ID, C::ClientHello | C::EncryptedExtensions) => {
                let cid = r.vec8()?;
                if cid.len() > crate::record::MAX_CID_LEN {
                    return Err(DecodeError::InvalidValue("connection_id"));
                }
                Extension::ConnectionId(cid.to_vec())
            }
            _ => {
                return Ok(Extension::Unknown { ext_type: ext, data: data.to_vec() });
            }
        };
        r.finish()?;
        Ok(parsed)
    }
}

fn u16_list(data: &[u8]) -> Result<Vec<u16>, DecodeError> {
    if !data.len().is_multiple_of(2) {
        return Err(DecodeError::LengthMismatch);
    }
    Ok(data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
}

pub fn encode_extensions(exts: &[Extension], out: &mut Vec<u8>) {
    out.nested16(|w| {
        for e in exts {
            e.encode(w);
        }
    });
}

/// Parses a length-prefixed extension block, rejecting duplicates and (in a
/// ClientHello) a pre_shared_key that is not last.
pub fn decode_extensions(r: &mut Reader<'_>, ctx: ExtContext) -> Result<Vec<Extension>, DecodeError> {
    let mut block = Reader::new(r.vec16()?);
    let mut out: Vec<Extension> = Vec::new();
    while !block.is_empty() {
        let t = block.u16()?;
        let data = block.vec16()?;
        if out.iter().any(|e| e.ext_type() == t) {
            return Err(DecodeError::DuplicateExtension(t));
        }
        if ctx == ExtContext::ClientHello && out.last().is_some_and(|e| e.ext_type() == ext_type::PRE_SHARED_KEY) {
            return Err(DecodeError::PskNotLast);
        }
        out.push(Extension::decode(t, data, ctx)?);
    }
    Ok(out)
}

pub fn find_ext(exts: &[Extension], t: u16) -> Option<&Extension> {
    exts.iter().find(|e| e.ext_type() == t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psk_must_be_last() {
        let mut body = Vec::new();
        encode_extensions(
            &[
                Extension::PreSharedKeyOffer(PskOffer {
                    identities: vec![PskIdentity { identity: vec![1], obfuscated_ticket_age: 0 }],
                    binders: vec![vec![0; 32]],
                }),
                Extension::EarlyData,
            ],
            &mut body,
        );
        let err = decode_extensions(&mut Reader::new(&body), ExtContext::ClientHello).unwrap_err();
        assert_eq!(err, DecodeError::PskNotLast);
    }

    #[test]
    fn duplicates_rejected() {
        let mut body = Vec::new();
        encode_extensions(&[Extension::EarlyData, Extension::EarlyData], &mut body);
        let err = decode_extensions(&mut Reader::new(&body), ExtContext::EncryptedExtensions).unwrap_err();
        assert_eq!(err, DecodeError::DuplicateExtension(ext_type::EARLY_DATA));
    }

    #[test]
    fn server_name_layout() {
        let mut out = Vec::new();
        Extension::ServerName("a.io".into()).encode(&mut out);
        assert_eq!(out, [0, 0, 0, 9, 0, 7, 0, 0, 4, b'a', b'.', b'i', b'o']);
    }

    #[test]
    fn binders_len_counts_prefixes() {
        let o = PskOffer {
            identities: vec![PskIdentity { identity: vec![0; 4], obfuscated_ticket_age: 0 }],
            binders: vec![vec![0; 32]],
        };
        assert_eq!(o.binders_len(), 35);
    }
}
