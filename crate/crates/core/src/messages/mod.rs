//! Handshake messages, extensions, DTLS fragmentation and ACKs.

mod ack;
mod builders;
mod credential;
mod extensions;
mod fragment;
mod handshake;

pub use ack::{build_ack, Ack, RecordNumber};
pub use builders::*;
pub use credential::{certificate_verify_content, min_certificate_size, verify_synthetic_certificate, Credential};
pub use extensions::{
    decode_extensions, encode_extensions, ext_type, find_ext, ExtContext, Extension, KeyShareEntry, PskIdentity,
    PskOffer, PSK_DHE_KE, PSK_KE, VERSION_DTLS13, VERSION_TLS13,
};
pub use fragment::{fragment, reassemble, DtlsFragment, Reassembly};
pub use handshake::{
    decode_handshake, dtls_to_tls_form, dump_line, encode_handshake, CertificateEntry, CertificatePayload,
    CertificateRequest, CertificateVerify, ClientHello, HandshakeMessage, HandshakeType, NewSessionTicket, ServerHello,
    DTLS_HS_HEADER, HRR_RANDOM, LEGACY_VERSION_DTLS12, LEGACY_VERSION_TLS12, TLS_HS_HEADER,
};
