use serde::{Deserialize, Serialize};

use tls13_iot::profiles::CredentialStore;
use tls13_iot::session::Session;
use tls13_iot::sim_net::{Direction, WireStats};
use tls13_iot::state_machine::{AuthMode, EventKind, OpCounters};

use crate::legacy::LegacySizeModel;
use crate::reference::{deviation_pct, reference_row};
use crate::scenario::Scenario;
use crate::BenchError;

/// Simulated-time budget for one scenario.
pub const DEADLINE_MS: u64 = 600_000;

/// Deviation from the published 1.3 value above which a warning is shown.
pub const WARN_DEVIATION_PCT: f64 = 25.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperComparison {
    pub label: String,
    pub paper_v12: usize,
    pub paper_v13: usize,
    /// Measured 1.3 total against the published 1.3 value.
    pub deviation_pct: f64,
    /// Published 1.2 → 1.3 change.
    pub paper_change_pct: f64,
    /// Modelled 1.2 → measured 1.3 change.
    pub measured_change_pct: f64,
}

impl PaperComparison {
    pub fn same_sign(&self) -> bool {
        self.paper_change_pct.signum() == self.measured_change_pct.signum()
    }

    pub fn warns(&self) -> bool {
        self.deviation_pct.abs() > WARN_DEVIATION_PCT
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub key: String,
    pub scenario: Scenario,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_phase: Option<String>,
    pub stats: WireStats,
    pub client_ops: OpCounters,
    pub server_ops: OpCounters,
    pub events: Vec<String>,
    /// Simulated time at which both sides completed.
    pub handshake_ms: Option<u64>,
    /// When the client could first send application data, in round trips.
    pub rtt_to_first_appdata: Option<f64>,
    pub early_data_in_first_flight: bool,
    pub flights: usize,
    pub hello_retries: usize,
    pub legacy12_total: usize,
    pub paper: Option<PaperComparison>,
}

impl Report {
    pub fn total(&self) -> usize {
        self.stats.total()
    }

    pub fn retransmissions(&self) -> usize {
        self.stats.per_message.iter().filter(|m| m.retransmission).count()
    }

    /// (1.2 model − 1.3 measured) / 1.2 model, in percent.
    pub fn reduction_pct(&self) -> f64 {
        100.0 * (self.legacy12_total as f64 - self.total() as f64) / self.legacy12_total as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_scenario(s: &Scenario) -> Result<Report, BenchError> {
    run_scenario_with(s, &CredentialStore::default())
}

/// Runs one handshake (plus `app_payload` bytes each way) and collects the
/// wire and operation counts. Invalid scenarios are errors; protocol
/// failures come back as a report with `ok == false`.
pub fn run_scenario_with(s: &Scenario, creds: &CredentialStore) -> Result<Report, BenchError> {
    let configs = s.endpoint_configs(creds)?;
    let model = LegacySizeModel::for_scenario(s)?;
    let mut session = Session::new(configs.client, configs.server, s.net.clone(), s.net.seed)?;

    let client_ready = session.run_until(DEADLINE_MS, |x| x.client().is_connected())?;
    let client_ready_ms = client_ready.then(|| session.now());
    let outcome = session.handshake(DEADLINE_MS);
    let handshake_ms = outcome.is_ok().then(|| session.now());

    let early_sent = s.mode == AuthMode::ZeroRtt && s.app_payload > 0;
    let early_accepted = early_sent && session.client().early_data_accepted();
    let mut outcome = outcome;
    if outcome.is_ok() && s.app_payload > 0 {
        outcome = exchange_data(&mut session, s.app_payload, early_accepted);
    }
    session.link_mut().close();

    let stats = session.stats();
    let early_data_in_first_flight =
        stats.per_message.iter().take_while(|m| m.direction == Direction::C2s).any(|m| m.name == "EarlyData");
    let round_trip = 2 * s.net.latency_ms;
    let rtt_to_first_appdata = if early_accepted && early_data_in_first_flight {
        Some(0.0)
    } else {
        client_ready_ms.filter(|_| round_trip > 0).map(|t| t as f64 / round_trip as f64)
    };

    let (error, failed_phase) = match &outcome {
        Ok(()) => (None, None),
        Err(e) => {
            let phase = session
                .client()
                .failed_in()
                .or_else(|| session.server().and_then(|c| c.failed_in()))
                .unwrap_or_else(|| session.client().phase());
            (Some(e.to_string()), Some(format!("{phase:?}")))
        }
    };

    let total = stats.total();
    let legacy12_total = model.total();
    let paper = reference_row(s.protocol, s.mode, s.effective_suite()?).map(|r| PaperComparison {
        label: r.label.to_string(),
        paper_v12: r.v12_bytes,
        paper_v13: r.v13_bytes,
        deviation_pct: deviation_pct(total, r.v13_bytes),
        paper_change_pct: r.change_pct(),
        measured_change_pct: deviation_pct(total, legacy12_total),
    });

    Ok(Report {
        key: s.key(),
        scenario: s.clone(),
        ok: outcome.is_ok(),
        error,
        failed_phase,
        client_ops: session.client().counters(),
        server_ops: session.server().map(|c| c.counters()).unwrap_or_default(),
        events: session.events().iter().map(ToString::to_string).collect(),
        flights: session.events().iter().filter(|e| matches!(e.kind, EventKind::FlightReady { .. })).count(),
        hello_retries: session.listener().hello_retry_requests() as usize,
        stats,
        handshake_ms,
        rtt_to_first_appdata,
        early_data_in_first_flight,
        legacy12_total,
        paper,
    })
}

fn exchange_data(session: &mut Session, len: usize, early_accepted: bool) -> Result<(), tls13_iot::Error> {
    let payload = vec![0x2a; len];
    if !early_accepted {
        session.send_client_data(&payload)?;
    }
    session.send_server_data(&payload)?;
    session.settle(DEADLINE_MS)?;
    match session.error() {
        Some(e) => Err(e.clone()),
        None => Ok(()),
    }
}
