//! Scenario sets loaded from JSON and run in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tls13_iot::crypto::SuiteId;
use tls13_iot::profiles::{resolve, Overrides};
use tls13_iot::sim_net::NetConfig;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

use crate::report::{run_scenario, Report};
use crate::scenario::{Flags, Scenario};
use crate::BenchError;

/// Cross product of profiles × protocols × modes × suites. Empty `modes` or
/// `suites` mean every one the profile lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub profiles: Vec<String>,
    pub protocols: Vec<Protocol>,
    pub modes: Vec<AuthMode>,
    #[serde(with = "suite_names")]
    pub suites: Vec<SuiteId>,
    pub overrides: Overrides,
    pub net: NetConfig,
    pub app_payload: usize,
    pub flags: Flags,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub scenarios: Vec<Scenario>,
    pub grid: Option<Grid>,
}

impl MatrixConfig {
    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Explicit scenarios followed by the grid expansion. Grid cells whose
    /// mode or suite the profile does not list are skipped.
    pub fn expand(&self) -> Result<Vec<Scenario>, BenchError> {
        let mut out = self.scenarios.clone();
        if let Some(g) = &self.grid {
            for name in &g.profiles {
                let profile = resolve(name, &g.overrides)?;
                let modes = if g.modes.is_empty() { profile.modes.clone() } else { g.modes.clone() };
                let suites = if g.suites.is_empty() { profile.suites.clone() } else { g.suites.clone() };
                for &protocol in &g.protocols {
                    for &mode in modes.iter().filter(|m| profile.modes.contains(m)) {
                        for &suite in suites.iter().filter(|s| profile.suites.contains(s)) {
                            out.push(Scenario {
                                name: None,
                                profile: name.clone(),
                                overrides: g.overrides.clone(),
                                protocol,
                                mode,
                                suite: Some(suite),
                                net: g.net.clone(),
                                app_payload: g.app_payload,
                                flags: g.flags.clone(),
                            });
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(BenchError::Config("matrix has no scenarios".into()));
        }
        Ok(out)
    }
}

/// Runs every scenario independently and returns the reports sorted by key.
pub fn run_matrix(scenarios: &[Scenario]) -> Result<Vec<Report>, BenchError> {
    let mut reports = scenarios.par_iter().map(run_scenario).collect::<Result<Vec<_>, _>>()?;
    reports.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(reports)
}

/// Scenarios, a matrix config, or saved reports: anything that names runs.
pub fn load_scenarios(json: &str) -> Result<Vec<Scenario>, BenchError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Input {
        Report(Box<Report>),
        Reports(Vec<Report>),
        Scenario(Box<Scenario>),
        Scenarios(Vec<Scenario>),
        Matrix(Box<MatrixConfig>),
    }
    Ok(match serde_json::from_str(json)? {
        Input::Report(r) => vec![r.scenario],
        Input::Reports(rs) => rs.into_iter().map(|r| r.scenario).collect(),
        Input::Scenario(s) => vec![*s],
        Input::Scenarios(ss) => ss,
        Input::Matrix(m) => m.expand()?,
    })
}

/// The six configurations of the published wire table.
pub fn reference_scenarios() -> Vec<Scenario> {
    use AuthMode::{PkMutual, Psk};
    use Protocol::{Dtls, Tls};
    let rows = [
        ("psk128", Tls, Psk, SuiteId::AES_128_CCM_SHA256),
        ("ecdsa128", Tls, PkMutual, SuiteId::AES_128_CCM_SHA256),
        ("ecdsa128_256", Tls, PkMutual, SuiteId::AES_256_CCM_SHA384),
        ("psk128", Dtls, Psk, SuiteId::AES_128_CCM_SHA256),
        ("ecdsa128", Dtls, PkMutual, SuiteId::AES_128_CCM_SHA256),
        ("ecdsa128_256", Dtls, PkMutual, SuiteId::AES_256_CCM_SHA384),
    ];
    rows.iter()
        .map(|&(profile, protocol, mode, suite)| {
            let mut s = Scenario::new(profile, protocol, mode, Some(suite));
            s.flags.compare_paper = true;
            s
        })
        .collect()
}

mod suite_names {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use tls13_iot::crypto::SuiteId;

    pub fn serialize<S: Serializer>(v: &[SuiteId], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|id| id.cli_name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SuiteId>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|n| SuiteId::from_cli_name(&n).ok_or_else(|| D::Error::custom(format!("unknown suite {n:?}"))))
            .collect()
    }
}
