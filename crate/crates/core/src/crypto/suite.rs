use serde::{Deserialize, Serialize};
use std::fmt;

use crate::crypto::HashAlg;
use crate::error::Error;

/// Cipher suite wire value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SuiteId(pub u16);

impl SuiteId {
    pub const AES_128_CCM_SHA256: SuiteId = SuiteId(0x1304);
    pub const AES_256_GCM_SHA384: SuiteId = SuiteId(0x1302);
    /// Not an IANA code point: taken from the private-use range so AES-256-CCM
    /// can be measured next to the standard suites.
    pub const AES_256_CCM_SHA384: SuiteId = SuiteId(0xff06);

    pub const ALL: [SuiteId; 3] =
        [SuiteId::AES_128_CCM_SHA256, SuiteId::AES_256_GCM_SHA384, SuiteId::AES_256_CCM_SHA384];

    pub fn params(self) -> Result<SuiteParams, Error> {
        suite_params(self)
    }

    pub fn name(self) -> &'static str {
        match self {
            SuiteId::AES_128_CCM_SHA256 => "TLS_AES_128_CCM_SHA256",
            SuiteId::AES_256_GCM_SHA384 => "TLS_AES_256_GCM_SHA384",
            SuiteId::AES_256_CCM_SHA384 => "TLS_AES_256_CCM_SHA384",
            _ => "unknown",
        }
    }

    /// Short CLI spelling, e.g. `aes128ccm`.
    pub fn from_cli_name(s: &str) -> Option<SuiteId> {
        match s.to_ascii_lowercase().as_str() {
            "aes128ccm" | "aes-128-ccm" | "tls_aes_128_ccm_sha256" => Some(SuiteId::AES_128_CCM_SHA256),
            "aes256gcm" | "aes-256-gcm" | "tls_aes_256_gcm_sha384" => Some(SuiteId::AES_256_GCM_SHA384),
            "aes256ccm" | "aes-256-ccm" | "tls_aes_256_ccm_sha384" => Some(SuiteId::AES_256_CCM_SHA384),
            _ => None,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            SuiteId::AES_128_CCM_SHA256 => "aes128ccm",
            SuiteId::AES_256_GCM_SHA384 => "aes256gcm",
            SuiteId::AES_256_CCM_SHA384 => "aes256ccm",
            _ => "unknown",
        }
    }
}

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AeadAlg {
    Aes128Ccm,
    Aes256Ccm,
    Aes256Gcm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteParams {
    pub id: SuiteId,
    pub key_len: usize,
    pub iv_len: usize,
    pub tag_len: usize,
    pub hash_len: usize,
    pub aead_alg: AeadAlg,
    pub hash_alg: HashAlg,
}

const REGISTRY: [SuiteParams; 3] = [
    SuiteParams {
        id: SuiteId::AES_128_CCM_SHA256,
        key_len: 16,
        iv_len: 12,
        tag_len: 16,
        hash_len: 32,
        aead_alg: AeadAlg::Aes128Ccm,
        hash_alg: HashAlg::Sha256,
    },
    SuiteParams {
        id: SuiteId::AES_256_GCM_SHA384,
        key_len: 32,
        iv_len: 12,
        tag_len: 16,
        hash_len: 48,
        aead_alg: AeadAlg::Aes256Gcm,
        hash_alg: HashAlg::Sha384,
    },
    SuiteParams {
        id: SuiteId::AES_256_CCM_SHA384,
        key_len: 32,
        iv_len: 12,
        tag_len: 16,
        hash_len: 48,
        aead_alg: AeadAlg::Aes256Ccm,
        hash_alg: HashAlg::Sha384,
    },
];

pub fn suite_params(id: SuiteId) -> Result<SuiteParams, Error> {
    REGISTRY.iter().find(|p| p.id == id).copied().ok_or(Error::UnknownSuite(id.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Curve {
    P256,
    P521,
}

impl Curve {
    pub fn field_len(self) -> usize {
        match self {
            Curve::P256 => 32,
            Curve::P521 => 66,
        }
    }

    pub fn from_name(s: &str) -> Option<Curve> {
        match s.to_ascii_lowercase().as_str() {
            "p256" | "p-256" | "secp256r1" => Some(Curve::P256),
            "p521" | "p-521" | "secp521r1" => Some(Curve::P521),
            _ => None,
        }
    }
}

/// Key exchange group wire value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NamedGroup(pub u16);

impl NamedGroup {
    pub const SECP256R1: NamedGroup = NamedGroup(0x0017);
    pub const SECP521R1: NamedGroup = NamedGroup(0x0019);

    pub fn curve(self) -> Result<Curve, Error> {
        match self {
            NamedGroup::SECP256R1 => Ok(Curve::P256),
            NamedGroup::SECP521R1 => Ok(Curve::P521),
            other => Err(Error::UnknownGroup(other.0)),
        }
    }

    pub fn for_curve(curve: Curve) -> NamedGroup {
        match curve {
            Curve::P256 => NamedGroup::SECP256R1,
            Curve::P521 => NamedGroup::SECP521R1,
        }
    }

    /// Uncompressed SEC1 point length.
    pub fn pubkey_len(self) -> Result<usize, Error> {
        Ok(2 * self.curve()?.field_len() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignatureScheme(pub u16);

impl SignatureScheme {
    pub const ECDSA_SECP256R1_SHA256: SignatureScheme = SignatureScheme(0x0403);
    pub const ECDSA_SECP521R1_SHA512: SignatureScheme = SignatureScheme(0x0603);

    pub fn curve(self) -> Result<Curve, Error> {
        match self {
            SignatureScheme::ECDSA_SECP256R1_SHA256 => Ok(Curve::P256),
            SignatureScheme::ECDSA_SECP521R1_SHA512 => Ok(Curve::P521),
            other => Err(Error::UnknownSignatureScheme(other.0)),
        }
    }

    pub fn hash_alg(self) -> Result<HashAlg, Error> {
        match self {
            SignatureScheme::ECDSA_SECP256R1_SHA256 => Ok(HashAlg::Sha256),
            SignatureScheme::ECDSA_SECP521R1_SHA512 => Ok(HashAlg::Sha512),
            other => Err(Error::UnknownSignatureScheme(other.0)),
        }
    }

    pub fn for_curve(curve: Curve) -> SignatureScheme {
        match curve {
            Curve::P256 => SignatureScheme::ECDSA_SECP256R1_SHA256,
            Curve::P521 => SignatureScheme::ECDSA_SECP521R1_SHA512,
        }
    }
}
