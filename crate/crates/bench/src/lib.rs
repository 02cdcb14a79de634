//! Wire-overhead benchmark: runs 1.3 handshakes over the simulated network
//! and sets them against a byte model of the matching 1.2 handshake.

pub mod emit;
pub mod legacy;
pub mod legacy12;
pub mod matrix;
pub mod reference;
pub mod report;
pub mod scenario;

pub use legacy::{legacy12_total, LegacySizeModel};
pub use matrix::{run_matrix, MatrixConfig};
pub use report::{run_scenario, Report};
pub use scenario::{Flags, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Protocol(#[from] tls13_iot::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}
