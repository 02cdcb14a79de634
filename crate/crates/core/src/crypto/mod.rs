//! Algorithm layer: AEAD, hashing, HKDF, ECDHE and deterministic ECDSA behind
//! a small cipher-suite registry. Primitive implementations come from the
//! RustCrypto crates; this module owns the registry and the TLS-specific
//! constructions (HkdfLabel, transcript, message_hash).

mod aead;
mod ecc;
mod hash;
mod suite;

pub use aead::{aead_open, aead_seal, aes_block};
pub use ecc::{ecdhe_keypair, ecdhe_shared, sign, verify, EcPrivateKey};
pub use hash::{
    derive_secret, hkdf_expand, hkdf_expand_label, hkdf_extract, hkdf_label, label_prefix, message_hash_message,
    transcript_hash, HashAlg, Transcript,
};
pub use suite::{suite_params, AeadAlg, Curve, NamedGroup, SignatureScheme, SuiteId, SuiteParams};
