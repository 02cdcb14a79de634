//! The five named test profiles, their knobs, and resolution into
//! client/server [`Config`]s.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::crypto::{Curve, EcPrivateKey, NamedGroup, SuiteId};
use crate::error::Error;
use crate::messages::{min_certificate_size, Credential};
use crate::record::MAX_CID_LEN;
use crate::state_machine::{AuthMode, Config, PskConfig, ServerPsk};
use crate::{Protocol, SimRng};

pub const DEFAULT_CERT_SIZE: usize = 500;
pub const DEFAULT_SNI: &str = "iot.example.com";
/// Identity used when no credential file supplies a PSK.
pub const DEFAULT_PSK_IDENTITY: &[u8] = b"Client_identity";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Psk128,
    Psk128_256,
    Ecdsa128,
    Ecdsa128_256,
    Full,
}

impl ProfileName {
    pub const ALL: [ProfileName; 5] = [
        ProfileName::Psk128,
        ProfileName::Psk128_256,
        ProfileName::Ecdsa128,
        ProfileName::Ecdsa128_256,
        ProfileName::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileName::Psk128 => "psk128",
            ProfileName::Psk128_256 => "psk128_256",
            ProfileName::Ecdsa128 => "ecdsa128",
            ProfileName::Ecdsa128_256 => "ecdsa128_256",
            ProfileName::Full => "full",
        }
    }
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ProfileName::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::UnknownProfile(s.to_string()))
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: ProfileName,
    pub suites: Vec<SuiteId>,
    pub groups: Vec<NamedGroup>,
    pub modes: Vec<AuthMode>,
    pub cid: Option<usize>,
    pub compat_mode: bool,
    pub zero_rtt: bool,
    pub tickets: bool,
    pub sni_hostname: Option<String>,
    pub cert_size: usize,
    pub max_key_shares: usize,
    pub mutual_auth: bool,
    pub deterministic_ecdsa: bool,
}

/// Knob changes applied on top of a profile table entry.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub suites: Option<Vec<SuiteId>>,
    pub cid: Option<usize>,
    pub compat_mode: Option<bool>,
    pub zero_rtt: Option<bool>,
    pub tickets: Option<bool>,
    pub sni_hostname: Option<String>,
    pub cert_size: Option<usize>,
    pub max_key_shares: Option<usize>,
    pub mutual_auth: Option<bool>,
}

fn table(name: ProfileName) -> Profile {
    use AuthMode::*;
    let ccm128 = SuiteId::AES_128_CCM_SHA256;
    let ccm256 = SuiteId::AES_256_CCM_SHA384;
    let base = Profile {
        name,
        suites: vec![ccm128],
        groups: Vec::new(),
        modes: vec![Psk],
        cid: None,
        compat_mode: false,
        zero_rtt: false,
        tickets: false,
        sni_hostname: None,
        cert_size: DEFAULT_CERT_SIZE,
        max_key_shares: 1,
        mutual_auth: false,
        deterministic_ecdsa: true,
    };
    let ecdsa = Profile {
        groups: vec![NamedGroup::SECP256R1],
        modes: vec![PkMutual, PkServerOnly],
        sni_hostname: Some(DEFAULT_SNI.into()),
        mutual_auth: true,
        ..base.clone()
    };
    match name {
        ProfileName::Psk128 => base,
        ProfileName::Psk128_256 => Profile { suites: vec![ccm128, ccm256], ..base },
        ProfileName::Ecdsa128 => ecdsa,
        ProfileName::Ecdsa128_256 => Profile {
            suites: vec![ccm128, ccm256],
            groups: vec![NamedGroup::SECP256R1, NamedGroup::SECP521R1],
            ..ecdsa
        },
        ProfileName::Full => Profile {
            suites: vec![ccm128, ccm256],
            groups: vec![NamedGroup::SECP256R1, NamedGroup::SECP521R1],
            modes: vec![PkMutual, PkServerOnly, Psk, ZeroRtt],
            compat_mode: true,
            zero_rtt: true,
            tickets: true,
            ..ecdsa
        },
    }
}

/// The table entry for `name` with `overrides` applied.
pub fn resolve(name: &str, overrides: &Overrides) -> Result<Profile, Error> {
    let mut p = table(name.parse()?);
    let illegal = |msg: String| Err(Error::IllegalOverride(msg));
    if let Some(suites) = &overrides.suites {
        if suites.is_empty() || suites.iter().any(|s| !p.suites.contains(s)) {
            return illegal(format!("{} supports only {:?}", p.name, names(&p.suites)));
        }
        p.suites = suites.clone();
    }
    if let Some(n) = overrides.max_key_shares {
        if n != 1 {
            return illegal("max_key_shares is fixed at 1".into());
        }
    }
    if let Some(cid) = overrides.cid {
        if cid > MAX_CID_LEN {
            return illegal(format!("cid length {cid} exceeds {MAX_CID_LEN}"));
        }
        p.cid = Some(cid);
    }
    if let Some(v) = overrides.compat_mode {
        p.compat_mode = v;
    }
    if let Some(v) = overrides.tickets {
        p.tickets = v;
    }
    if let Some(v) = overrides.zero_rtt {
        if v && !p.modes.iter().any(|m| m.uses_psk()) {
            return illegal(format!("0-RTT needs a PSK mode, {} has none", p.name));
        }
        if v && !p.tickets {
            return illegal(format!("0-RTT on {} requires tickets", p.name));
        }
        p.zero_rtt = v;
        if v && !p.modes.contains(&AuthMode::ZeroRtt) {
            p.modes.push(AuthMode::ZeroRtt);
        }
        if !v {
            p.modes.retain(|&m| m != AuthMode::ZeroRtt);
        }
    }
    let has_certs = p.modes.iter().any(|m| m.uses_certificates());
    if let Some(sni) = &overrides.sni_hostname {
        if !has_certs {
            return illegal("SNI is only used with certificate authentication".into());
        }
        p.sni_hostname = Some(sni.clone());
    }
    if let Some(v) = overrides.mutual_auth {
        if v && !has_certs {
            return illegal(format!("{} has no certificate modes", p.name));
        }
        p.mutual_auth = v;
    }
    if let Some(size) = overrides.cert_size {
        let min = p.groups.iter().filter_map(|g| g.curve().ok()).map(min_certificate_size).max().unwrap_or(0);
        if size < min || size > 0xffff {
            return illegal(format!("cert_size {size} outside {min}..=65535"));
        }
        p.cert_size = size;
    }
    Ok(p)
}

fn names(suites: &[SuiteId]) -> Vec<&'static str> {
    suites.iter().map(|s| s.cli_name()).collect()
}

/// PSKs and key pairs read from a credential file.
#[derive(Clone, Debug, Default)]
pub struct CredentialStore {
    pub psks: Vec<(Vec<u8>, Vec<u8>)>,
    pub keys: Vec<EcPrivateKey>,
    pub cert_size: Option<usize>,
}

impl CredentialStore {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn key_for(&self, curve: Curve) -> Option<&EcPrivateKey> {
        self.keys.iter().find(|k| k.curve() == curve)
    }
}

impl FromStr for CredentialStore {
    type Err = Error;

    /// Lines: `psk <identity-hex> <key-hex>`, `eckey <curve> <priv-hex> <pub-hex>`, `certsize <n>`; `#` comments.
    fn from_str(text: &str) -> Result<Self, Error> {
        let mut store = CredentialStore::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::Parse { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            let fields: Vec<&str> = content.split_whitespace().collect();
            let hex = |s: &str, what: &str| hex::decode(s).map_err(|e| err(format!("bad {what} hex: {e}")));
            match fields.as_slice() {
                [] => {}
                ["psk", id, key] => {
                    let (id, key) = (hex(id, "identity")?, hex(key, "key")?);
                    if id.is_empty() || key.is_empty() {
                        return Err(err("empty psk identity or key".into()));
                    }
                    store.psks.push((id, key));
                }
                ["eckey", curve, private, public] => {
                    let curve = Curve::from_name(curve).ok_or_else(|| err(format!("unknown curve {curve:?}")))?;
                    let key = EcPrivateKey::from_bytes(curve, &hex(private, "private key")?)
                        .map_err(|e| err(format!("invalid private key: {e}")))?;
                    if key.public_key() != hex(public, "public key")? {
                        return Err(err("public key does not match private key".into()));
                    }
                    store.keys.push(key);
                }
                ["certsize", n] => {
                    store.cert_size = Some(n.parse().map_err(|e| err(format!("bad certsize: {e}")))?);
                }
                [kw, ..] => return Err(err(format!("unrecognised entry {kw:?} or wrong field count"))),
            }
        }
        Ok(store)
    }
}

/// Client and server configuration for one run.
#[derive(Clone, Debug)]
pub struct EndpointConfigs {
    pub client: Config,
    pub server: Config,
}

impl Profile {
    pub fn has_psk_modes(&self) -> bool {
        self.modes.iter().any(|m| m.uses_psk())
    }

    /// Curve paired with a suite: 256-bit suites use P-521 when the profile
    /// carries it.
    pub fn curve_for(&self, suite: SuiteId) -> Result<Curve, Error> {
        let wide = suite.params()?.key_len == 32;
        let curve = if wide && self.groups.contains(&NamedGroup::SECP521R1) { Curve::P521 } else { Curve::P256 };
        Ok(curve)
    }

    /// Concrete endpoint configs for `mode` with the profile's first suite
    /// unless `suite` is given. Keys missing from `creds` are generated from `seed`.
    pub fn configs(
        &self,
        protocol: Protocol,
        mode: AuthMode,
        suite: Option<SuiteId>,
        creds: &CredentialStore,
        seed: u64,
    ) -> Result<EndpointConfigs, Error> {
        // psk_ecdhe is outside every default mode set but may be requested
        // wherever both PSKs and an ECDHE group exist
        let psk_ecdhe_ok = mode == AuthMode::PskEcdhe && self.has_psk_modes() && !self.groups.is_empty();
        if !self.modes.contains(&mode) && !psk_ecdhe_ok {
            return Err(Error::IllegalOverride(format!("mode {mode} is not part of profile {}", self.name)));
        }
        let suite = suite.unwrap_or(self.suites[0]);
        if !self.suites.contains(&suite) {
            return Err(Error::IllegalOverride(format!(
                "suite {} is not part of profile {}",
                suite.cli_name(),
                self.name
            )));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let curve = self.curve_for(suite)?;
        let first = NamedGroup::for_curve(curve);
        let mut groups = vec![first];
        groups.extend(self.groups.iter().copied().filter(|g| *g != first));

        let mut client = Config::new(protocol, mode);
        client.suites = vec![suite];
        client.suites.extend(self.suites.iter().copied().filter(|s| *s != suite));
        client.groups = groups.clone();
        let mut server = client.clone();
        server.suites = client.suites.clone();

        let cid = if protocol == Protocol::Dtls { self.cid } else { None };
        let compat = protocol == Protocol::Tls && self.compat_mode;
        for c in [&mut client, &mut server] {
            c.cid_len = cid;
            c.compat = compat;
            c.tickets = self.tickets;
        }

        if mode.uses_certificates() {
            let cert_size = creds.cert_size.unwrap_or(self.cert_size);
            let cert = |rng: &mut SimRng| -> Result<Credential, Error> {
                let key = match creds.key_for(curve) {
                    Some(k) => k.clone(),
                    None => EcPrivateKey::generate(curve, rng),
                };
                Credential::synthetic_certificate(key, cert_size)
            };
            let server_cert = cert(&mut rng)?;
            let mutual = mode == AuthMode::PkMutual;
            client.server_name = self.sni_hostname.clone();
            client.peer_public_key = public_key(&server_cert);
            if mutual {
                let client_cert = cert(&mut rng)?;
                server.peer_public_key = public_key(&client_cert);
                client.certificate = Some(client_cert);
            }
            server.certificate = Some(server_cert);
            server.mutual_auth = mutual;
        }

        if mode.uses_psk() {
            let (identity, secret) = match creds.psks.first() {
                Some((id, key)) => (id.clone(), key.clone()),
                None => {
                    let mut key = vec![0u8; 16];
                    rand::RngCore::fill_bytes(&mut rng, &mut key);
                    (DEFAULT_PSK_IDENTITY.to_vec(), key)
                }
            };
            client.psk = Some(PskConfig::external(&identity, &secret, suite));
            server.server_psks.push(ServerPsk { identity, secret, suite });
        }
        server.accept_early_data = self.zero_rtt || mode == AuthMode::ZeroRtt;
        Ok(EndpointConfigs { client, server })
    }
}

fn public_key(c: &Credential) -> Option<Vec<u8>> {
    match c {
        Credential::Certificate { public_key, .. } => Some(public_key.clone()),
        Credential::Psk { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_entries() {
        let p = resolve("psk128", &Overrides::default()).unwrap();
        assert_eq!(p.suites, vec![SuiteId::AES_128_CCM_SHA256]);
        assert_eq!(p.modes, vec![AuthMode::Psk]);
        assert_eq!(p.sni_hostname, None);

        let p = resolve("ecdsa128_256", &Overrides::default()).unwrap();
        assert!(p.suites.contains(&SuiteId::AES_128_CCM_SHA256) && p.suites.contains(&SuiteId::AES_256_CCM_SHA384));
        assert_eq!(p.groups, vec![NamedGroup::SECP256R1, NamedGroup::SECP521R1]);
        assert!(p.sni_hostname.is_some() && p.deterministic_ecdsa);

        let p = resolve("full", &Overrides::default()).unwrap();
        assert!(p.zero_rtt && p.compat_mode && p.tickets);
        assert!(!p.modes.contains(&AuthMode::PskEcdhe));
    }

    #[test]
    fn full_is_a_superset() {
        let full = resolve("full", &Overrides::default()).unwrap();
        for name in ProfileName::ALL {
            let p = resolve(name.as_str(), &Overrides::default()).unwrap();
            assert!(p.suites.iter().all(|s| full.suites.contains(s)), "{name}");
            assert!(p.groups.iter().all(|g| full.groups.contains(g)), "{name}");
            assert!(p.modes.iter().all(|m| full.modes.contains(m)), "{name}");
            assert!(full.zero_rtt >= p.zero_rtt && full.compat_mode >= p.compat_mode && full.tickets >= p.tickets);
            assert_eq!(p.max_key_shares, 1);
        }
    }

    #[test]
    fn family_mode_separation() {
        for name in [ProfileName::Psk128, ProfileName::Psk128_256] {
            assert!(table(name).modes.iter().all(|m| !m.uses_certificates()));
        }
        for name in [ProfileName::Ecdsa128, ProfileName::Ecdsa128_256] {
            assert!(table(name).modes.iter().all(|m| !m.uses_psk()));
        }
    }

    #[test]
    fn resolution_errors() {
        assert!(matches!(resolve("psk64", &Overrides::default()), Err(Error::UnknownProfile(_))));
        let zero_rtt = Overrides { zero_rtt: Some(true), ..Default::default() };
        assert!(matches!(resolve("psk128", &zero_rtt), Err(Error::IllegalOverride(_))));
        assert!(matches!(resolve("ecdsa128", &zero_rtt), Err(Error::IllegalOverride(_))));
        let with_tickets = Overrides { tickets: Some(true), ..zero_rtt };
        assert!(resolve("psk128", &with_tickets).unwrap().modes.contains(&AuthMode::ZeroRtt));
        let shares = Overrides { max_key_shares: Some(2), ..Default::default() };
        assert!(matches!(resolve("full", &shares), Err(Error::IllegalOverride(_))));
        let sni = Overrides { sni_hostname: Some("x".into()), ..Default::default() };
        assert!(matches!(resolve("psk128", &sni), Err(Error::IllegalOverride(_))));
        let suites = Overrides { suites: Some(vec![SuiteId::AES_256_CCM_SHA384]), ..Default::default() };
        assert!(matches!(resolve("ecdsa128", &suites), Err(Error::IllegalOverride(_))));
    }

    #[test]
    fn resolution_is_pure() {
        let o = Overrides { cid: Some(4), cert_size: Some(800), ..Default::default() };
        assert_eq!(resolve("full", &o).unwrap(), resolve("full", &o).unwrap());
    }

    #[test]
    fn credential_file() {
        let store: CredentialStore =
            "# comment\npsk 436c69656e74 000102030405060708090a0b0c0d0e0f\n\ncertsize 800\n".parse().unwrap();
        assert_eq!(store.psks.len(), 1);
        assert_eq!(store.psks[0].0, b"Client");
        assert_eq!(store.cert_size, Some(800));

        let err = "psk 00 01\npsk zz 01\n".parse::<CredentialStore>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        let err = "bogus 1\n".parse::<CredentialStore>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn eckey_line_round_trip() {
        let mut rng = SimRng::seed_from_u64(3);
        let key = EcPrivateKey::generate(Curve::P256, &mut rng);
        let line = format!("eckey p256 {} {}", hex::encode(key.to_bytes()), hex::encode(key.public_key()));
        let store: CredentialStore = line.parse().unwrap();
        assert_eq!(store.key_for(Curve::P256).unwrap().public_key(), key.public_key());
        let mut bad = key.public_key();
        bad[5] ^= 1;
        let line = format!("eckey p256 {} {}", hex::encode(key.to_bytes()), hex::encode(bad));
        assert!(matches!(line.parse::<CredentialStore>(), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn configs_follow_profile() {
        let p = resolve("ecdsa128", &Overrides::default()).unwrap();
        let c = p.configs(Protocol::Dtls, AuthMode::PkMutual, None, &CredentialStore::default(), 1).unwrap();
        assert!(c.client.certificate.is_some() && c.server.certificate.is_some());
        assert_eq!(c.client.server_name.as_deref(), Some(DEFAULT_SNI));
        assert!(c.server.mutual_auth);

        let p = resolve("psk128", &Overrides::default()).unwrap();
        let c = p.configs(Protocol::Tls, AuthMode::Psk, None, &CredentialStore::default(), 1).unwrap();
        assert!(c.client.server_name.is_none() && c.client.psk.is_some());
        assert!(p.configs(Protocol::Tls, AuthMode::PkMutual, None, &CredentialStore::default(), 1).is_err());

        let p = resolve("ecdsa128_256", &Overrides::default()).unwrap();
        let c = p
            .configs(
                Protocol::Tls,
                AuthMode::PkServerOnly,
                Some(SuiteId::AES_256_CCM_SHA384),
                &CredentialStore::default(),
                1,
            )
            .unwrap();
        assert_eq!(c.client.groups[0], NamedGroup::SECP521R1);
        assert_eq!(c.server.certificate.as_ref().unwrap().curve(), Some(Curve::P521));
    }
}
