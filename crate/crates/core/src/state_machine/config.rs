use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{NamedGroup, SuiteId};
use crate::error::Error;
use crate::key_schedule::PskKind;
use crate::messages::Credential;
use crate::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    PkMutual,
    PkServerOnly,
    Psk,
    PskEcdhe,
    ZeroRtt,
}

impl AuthMode {
    pub const ALL: [AuthMode; 5] =
        [AuthMode::PkMutual, AuthMode::PkServerOnly, AuthMode::Psk, AuthMode::PskEcdhe, AuthMode::ZeroRtt];

    pub fn name(self) -> &'static str {
        match self {
            AuthMode::PkMutual => "pk_mutual",
            AuthMode::PkServerOnly => "pk_server_only",
            AuthMode::Psk => "psk",
            AuthMode::PskEcdhe => "psk_ecdhe",
            AuthMode::ZeroRtt => "zero_rtt",
        }
    }

    pub fn uses_psk(self) -> bool {
        matches!(self, AuthMode::Psk | AuthMode::PskEcdhe | AuthMode::ZeroRtt)
    }

    pub fn uses_certificates(self) -> bool {
        matches!(self, AuthMode::PkMutual | AuthMode::PkServerOnly)
    }

    pub fn uses_ecdhe(self) -> bool {
        matches!(self, AuthMode::PkMutual | AuthMode::PkServerOnly | AuthMode::PskEcdhe)
    }
}

impl FromStr for AuthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AuthMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown auth mode {s:?}")))
    }
}

impl fmt::Display for AuthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Client-side PSK: external, or a resumption ticket.
#[derive(Clone, Debug)]
pub struct PskConfig {
    pub identity: Vec<u8>,
    pub secret: Vec<u8>,
    pub kind: PskKind,
    /// Suite whose hash the PSK is bound to.
    pub suite: SuiteId,
    /// Added to the ticket age on the wire; 0 for external PSKs.
    pub age_add: u32,
    /// Simulated time the ticket was received, for the age computation.
    pub issued_at_ms: u64,
    pub max_early_data: u32,
}

impl PskConfig {
    pub fn external(identity: &[u8], secret: &[u8], suite: SuiteId) -> Self {
        PskConfig {
            identity: identity.to_vec(),
            secret: secret.to_vec(),
            kind: PskKind::External,
            suite,
            age_add: 0,
            issued_at_ms: 0,
            max_early_data: u32::MAX,
        }
    }
}

/// Server-side PSK table entry for external keys.
#[derive(Clone, Debug)]
pub struct ServerPsk {
    pub identity: Vec<u8>,
    pub secret: Vec<u8>,
    pub suite: SuiteId,
}

/// A ticket as stored by the client after a NewSessionTicket.
#[derive(Clone, Debug)]
pub struct ClientTicket {
    pub ticket: Vec<u8>,
    pub psk: Vec<u8>,
    pub suite: SuiteId,
    pub lifetime_s: u32,
    pub age_add: u32,
    pub received_at_ms: u64,
    pub max_early_data: u32,
}

impl ClientTicket {
    pub fn to_psk_config(&self) -> PskConfig {
        PskConfig {
            identity: self.ticket.clone(),
            secret: self.psk.clone(),
            kind: PskKind::Resumption,
            suite: self.suite,
            age_add: self.age_add,
            issued_at_ms: self.received_at_ms,
            max_early_data: self.max_early_data,
        }
    }
}

/// DTLS record-header and datagram knobs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtlsOptions {
    pub seq_16bit: bool,
    /// Length field on every record; with `packing` it is added anyway to
    /// all but the last record of a datagram.
    pub length_present: bool,
    pub packing: bool,
    pub mtu: usize,
}

impl Default for DtlsOptions {
    fn default() -> Self {
        DtlsOptions { seq_16bit: false, length_present: false, packing: false, mtu: 1280 }
    }
}

/// Everything one endpoint needs to run a handshake.
#[derive(Clone, Debug)]
pub struct Config {
    pub protocol: Protocol,
    pub mode: AuthMode,
    /// Preference order.
    pub suites: Vec<SuiteId>,
    /// Preference order; the client sends a key share for the first.
    pub groups: Vec<NamedGroup>,
    /// Own certificate credential.
    pub certificate: Option<Credential>,
    /// Pinned peer public key. Without it the self-signed certificate is
    /// trusted on its own signature.
    pub peer_public_key: Option<Vec<u8>>,
    /// Client: PSK offered. Server: unused.
    pub psk: Option<PskConfig>,
    /// Server: external PSKs it accepts.
    pub server_psks: Vec<ServerPsk>,
    pub server_name: Option<String>,
    /// Connection ID length to use (0..=16); `None` disables the extension.
    pub cid_len: Option<usize>,
    pub compat: bool,
    /// Client: application data sent as 0-RTT. Server: accept early data.
    pub early_data: Option<Vec<u8>>,
    pub accept_early_data: bool,
    /// Server issues a NewSessionTicket after the handshake.
    pub tickets: bool,
    pub ticket_lifetime_s: u32,
    pub dos_protection: bool,
    /// Server requests a client certificate (pk modes).
    pub mutual_auth: bool,
    pub pad_len: usize,
    pub dtls: DtlsOptions,
}

impl Config {
    pub fn new(protocol: Protocol, mode: AuthMode) -> Self {
        Config {
            protocol,
            mode,
            suites: vec![SuiteId::AES_128_CCM_SHA256],
            groups: vec![NamedGroup::SECP256R1],
            certificate: None,
            peer_public_key: None,
            psk: None,
            server_psks: Vec::new(),
            server_name: None,
            cid_len: None,
            compat: false,
            early_data: None,
            accept_early_data: false,
            tickets: false,
            ticket_lifetime_s: 7200,
            dos_protection: false,
            mutual_auth: mode == AuthMode::PkMutual,
            pad_len: 0,
            dtls: DtlsOptions::default(),
        }
    }

    /// Rejects combinations no handshake can satisfy.
    pub fn validate(&self) -> Result<(), Error> {
        if self.suites.is_empty() {
            return Err(Error::Config("no cipher suites".into()));
        }
        if self.cid_len.is_some_and(|l| l > crate::record::MAX_CID_LEN) {
            return Err(Error::Config("connection id longer than 16 bytes".into()));
        }
        if self.cid_len.is_some() && self.protocol == Protocol::Tls {
            return Err(Error::Config("connection ids are DTLS only".into()));
        }
        if self.compat && self.protocol == Protocol::Dtls {
            return Err(Error::Config("compatibility mode is TLS only".into()));
        }
        if self.mode.uses_ecdhe() && self.groups.is_empty() {
            return Err(Error::Config(format!("{} needs a named group", self.mode)));
        }
        if self.early_data.is_some() && self.mode != AuthMode::ZeroRtt {
            return Err(Error::Config("early data requires zero_rtt mode".into()));
        }
        if self.protocol == Protocol::Dtls && self.dtls.mtu < 64 {
            return Err(Error::Config(format!("mtu {} too small", self.dtls.mtu)));
        }
        Ok(())
    }
}
