//! One benchmark run, described so it can be saved and replayed from JSON.

use serde::{Deserialize, Serialize};

use tls13_iot::crypto::SuiteId;
use tls13_iot::profiles::{resolve, CredentialStore, EndpointConfigs, Overrides, Profile};
use tls13_iot::sim_net::NetConfig;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

use crate::BenchError;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Flags {
    /// Connection ID length; DTLS only.
    pub cid: Option<usize>,
    pub packing: bool,
    /// Zero bytes appended to every protected record.
    pub padding: usize,
    pub compare_paper: bool,
    /// Stateless cookie exchange before the server commits state.
    pub dos: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub profile: String,
    #[serde(default)]
    pub overrides: Overrides,
    pub protocol: Protocol,
    pub mode: AuthMode,
    #[serde(default, with = "suite_name")]
    pub suite: Option<SuiteId>,
    #[serde(default)]
    pub net: NetConfig,
    /// Application bytes each way after the handshake; 0 measures the
    /// handshake alone.
    #[serde(default)]
    pub app_payload: usize,
    #[serde(default)]
    pub flags: Flags,
}

impl Scenario {
    pub fn new(profile: &str, protocol: Protocol, mode: AuthMode, suite: Option<SuiteId>) -> Self {
        Scenario {
            name: None,
            profile: profile.to_string(),
            overrides: Overrides::default(),
            protocol,
            mode,
            suite,
            net: NetConfig::default(),
            app_payload: 0,
            flags: Flags::default(),
        }
    }

    pub fn resolved_profile(&self) -> Result<Profile, BenchError> {
        let mut o = self.overrides.clone();
        if self.flags.cid.is_some() {
            o.cid = self.flags.cid;
        }
        Ok(resolve(&self.profile, &o)?)
    }

    /// Suite actually negotiated: the explicit one or the profile's first.
    pub fn effective_suite(&self) -> Result<SuiteId, BenchError> {
        match self.suite {
            Some(s) => Ok(s),
            None => Ok(self.resolved_profile()?.suites[0]),
        }
    }

    /// `protocol/profile/mode/suite`, prefixed by the name when given.
    pub fn key(&self) -> String {
        let suite = self.suite.map_or("default", SuiteId::cli_name);
        let base = format!("{}/{}/{}/{}", self.protocol.name(), self.profile, self.mode, suite);
        match &self.name {
            Some(n) => format!("{n}:{base}"),
            None => base,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.net.validate()?;
        self.endpoint_configs(&CredentialStore::default()).map(|_| ())
    }

    pub fn endpoint_configs(&self, creds: &CredentialStore) -> Result<EndpointConfigs, BenchError> {
        let profile = self.resolved_profile()?;
        let mut c = profile.configs(self.protocol, self.mode, self.suite, creds, self.net.seed)?;
        for cfg in [&mut c.client, &mut c.server] {
            cfg.pad_len = self.flags.padding;
            cfg.dtls.packing = self.flags.packing;
            cfg.dtls.mtu = self.net.mtu;
        }
        c.server.dos_protection = self.flags.dos;
        if self.mode == AuthMode::ZeroRtt && self.app_payload > 0 {
            c.client.early_data = Some(vec![0x2a; self.app_payload]);
        }
        c.client.validate()?;
        c.server.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(s)?)
    }
}

mod suite_name {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use tls13_iot::crypto::SuiteId;

    pub fn serialize<S: Serializer>(v: &Option<SuiteId>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(id) => s.serialize_str(id.cli_name()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<SuiteId>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(name) => SuiteId::from_cli_name(&name)
                .map(Some)
                .ok_or_else(|| D::Error::custom(format!("unknown suite {name:?}"))),
        }
    }
}
