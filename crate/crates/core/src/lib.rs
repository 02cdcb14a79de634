//! TLS 1.3 and DTLS 1.3 protocol core sized for wire-overhead experiments.
//!
//! The crate is sans-IO: connections consume bytes and produce records, and
//! [`sim_net`] supplies deterministic in-memory links to drive them.

pub mod codec;
pub mod crypto;
pub mod error;
pub mod key_schedule;
pub mod messages;
pub mod profiles;
pub mod record;
pub mod session;
pub mod sim_net;
pub mod state_machine;
pub mod testvec;

pub use error::{DecodeError, Error};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tls,
    Dtls,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Tls => "tls",
            Protocol::Dtls => "dtls",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "tls" => Ok(Protocol::Tls),
            "dtls" => Ok(Protocol::Dtls),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Deterministic stream used wherever the protocol needs randomness.
pub type SimRng = rand_chacha::ChaCha20Rng;
