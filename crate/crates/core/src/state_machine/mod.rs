//! Client and server connection state machines.
//!
//! A [`Connection`] is sans-IO: bytes go in through `handle_*`, sealed
//! records come out of `take_outgoing`, and timers are driven by the
//! caller's simulated clock. The server side is fronted by a [`Listener`]
//! that owns the cookie secret, the ticket table and the CID/address demux.

mod client;
mod config;
mod connection;
mod cookie;
mod listener;
mod server;

pub use config::{AuthMode, ClientTicket, Config, DtlsOptions, PskConfig, ServerPsk};
pub use connection::{Connection, KeyInputs, Tamper, TamperTarget};
pub use cookie::CookieSecret;
pub use listener::{Listener, TicketEntry};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sim_net::Addr;
pub use crate::sim_net::WirePart;

pub const INITIAL_RTO_MS: u64 = 400;
pub const MAX_RETRANSMISSIONS: u32 = 8;
/// Accepted drift between the client's and server's view of a ticket age.
pub const TICKET_AGE_TOLERANCE_MS: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Client,
    Server,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    WaitSh,
    WaitEe,
    WaitCertCr,
    WaitCv,
    WaitFinished,
    /// Server waiting for the client's second flight.
    WaitClientFlight,
    Connected,
    Failed,
}

/// Proxy counters for computational cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub aead_seal: u64,
    pub aead_open: u64,
    pub hash_blocks: u64,
    pub dh_ops: u64,
    pub sign_ops: u64,
    pub verify_ops: u64,
    pub hkdf_ops: u64,
}

impl OpCounters {
    pub fn asymmetric(&self) -> u64 {
        self.dh_ops + self.sign_ops + self.verify_ops
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    FlightReady { flight: String },
    HandshakeComplete,
    AppData { len: usize },
    EarlyData { len: usize, replay_uncertain: bool },
    Ticket { lifetime_s: u32 },
    Alert { sent: bool, description: u8 },
    AddressMigrated { from: Addr, to: Addr },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::FlightReady { .. } => "flight_ready",
            EventKind::HandshakeComplete => "handshake_complete",
            EventKind::AppData { .. } => "app_data",
            EventKind::EarlyData { .. } => "early_data",
            EventKind::Ticket { .. } => "ticket",
            EventKind::Alert { .. } => "alert",
            EventKind::AddressMigrated { .. } => "address_migrated",
        }
    }

    fn detail(&self) -> String {
        match self {
            EventKind::FlightReady { flight } => flight.clone(),
            EventKind::HandshakeComplete => "-".into(),
            EventKind::AppData { len } => format!("len={len}"),
            EventKind::EarlyData { len, replay_uncertain } => format!("len={len} replay_uncertain={replay_uncertain}"),
            EventKind::Ticket { lifetime_s } => format!("lifetime={lifetime_s}"),
            EventKind::Alert { sent, description } => {
                format!("{} {}", if *sent { "sent" } else { "received" }, alert::name(*description))
            }
            EventKind::AddressMigrated { from, to } => format!("{from}->{to}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub t_ms: u64,
    pub conn_id: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl fmt::Display for Event {
    /// `<t_sim_ms> <conn_id> <event_kind> <detail>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.t_ms, self.conn_id, self.kind.name(), self.kind.detail())
    }
}

/// One datagram (DTLS) or stream write (TLS).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub bytes: Vec<u8>,
    pub parts: Vec<WirePart>,
    pub retransmission: bool,
}

pub mod alert {
    pub const UNEXPECTED_MESSAGE: u8 = 10;
    pub const BAD_RECORD_MAC: u8 = 20;
    pub const HANDSHAKE_FAILURE: u8 = 40;
    pub const BAD_CERTIFICATE: u8 = 42;
    pub const ILLEGAL_PARAMETER: u8 = 47;
    pub const DECODE_ERROR: u8 = 50;
    pub const DECRYPT_ERROR: u8 = 51;
    pub const INTERNAL_ERROR: u8 = 80;

    pub fn name(code: u8) -> &'static str {
        match code {
            UNEXPECTED_MESSAGE => "unexpected_message",
            BAD_RECORD_MAC => "bad_record_mac",
            HANDSHAKE_FAILURE => "handshake_failure",
            BAD_CERTIFICATE => "bad_certificate",
            ILLEGAL_PARAMETER => "illegal_parameter",
            DECODE_ERROR => "decode_error",
            DECRYPT_ERROR => "decrypt_error",
            _ => "internal_error",
        }
    }
}
