use thiserror::Error;

use crate::key_schedule::Stage;

/// Wire-decoding failures. Kept apart from [`Error`] so that a malformed
/// message is never confused with an authentication failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated message")]
    Truncated,
    #[error("length field does not match content")]
    LengthMismatch,
    #[error("unknown handshake type {0}")]
    UnknownType(u8),
    #[error("duplicate extension {0}")]
    DuplicateExtension(u16),
    #[error("pre_shared_key is not the last extension")]
    PskNotLast,
    #[error("invalid value in {0}")]
    InvalidValue(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // algorithm layer
    #[error("unknown cipher suite 0x{0:04x}")]
    UnknownSuite(u16),
    #[error("unknown named group 0x{0:04x}")]
    UnknownGroup(u16),
    #[error("unknown signature scheme 0x{0:04x}")]
    UnknownSignatureScheme(u16),
    #[error("output length {0} exceeds the HKDF limit")]
    LengthOverflow(usize),
    #[error("invalid key or nonce length")]
    InvalidKeyLength,
    #[error("AEAD authentication failure")]
    AuthenticationFailure,
    #[error("invalid curve point")]
    InvalidPoint,
    #[error("key does not match the signature scheme's curve")]
    KeyMismatch,

    // key schedule
    #[error("{op} not allowed in stage {stage:?}")]
    WrongStage { op: &'static str, stage: Stage },
    #[error("record sequence number space exhausted")]
    SequenceOverflow,

    // messages
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),
    #[error("configuration conflict: {0}")]
    Config(String),
    #[error("no cipher suite in common")]
    NoCommonSuite,
    #[error("no key exchange group in common")]
    NoCommonGroup,
    #[error("credential missing for the selected mode")]
    MissingCredential,
    #[error("reassembly has a gap")]
    GapOnFlush,
    #[error("duplicate fragment with different content")]
    InconsistentDuplicate,

    // record layer
    #[error("record too large")]
    RecordOverflow,
    #[error("inner plaintext is all zeros")]
    AllZeroInner,
    #[error("unexpected outer content type {0}")]
    BadOuterType(u8),
    #[error("ciphertext too short for sequence number mask")]
    ShortCiphertext,
    #[error("replayed record")]
    ReplayedRecord,
    #[error("unknown connection id")]
    UnknownCid,
    #[error("no keys for epoch {0}")]
    UnknownEpoch(u64),

    // handshake
    #[error("unexpected message: {0}")]
    UnexpectedMessage(String),
    #[error("record decryption failed")]
    DecryptFailure,
    #[error("Finished MAC mismatch")]
    BadFinished,
    #[error("PSK binder mismatch")]
    BadBinder,
    #[error("CertificateVerify signature invalid")]
    BadSignature,
    #[error("invalid cookie")]
    BadCookie,
    #[error("handshake timed out after retransmission cap")]
    HandshakeTimeout,
    #[error("connection not ready for application data")]
    NotReady,
    #[error("unknown ticket")]
    UnknownTicket,
    #[error("expired ticket")]
    ExpiredTicket,
    #[error("illegal parameter: {0}")]
    IllegalParameter(&'static str),
    #[error("peer sent fatal alert {0}")]
    PeerAlert(u8),

    // simulation and configuration
    #[error("datagram of {len} bytes exceeds MTU {mtu}")]
    OversizedDatagram { len: usize, mtu: usize },
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("illegal override: {0}")]
    IllegalOverride(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
