//! The TLS 1.3 secret tree, shared by TLS and DTLS (only the label prefix
//! differs).
//!
//! ```text
//!              0
//!              |
//!   PSK ->  HKDF-Extract = early_secret --> binder_key, c e traffic
//!              |
//!        derive_secret(., "derived", "")
//!              |
//!  (EC)DHE -> HKDF-Extract = handshake_secret --> c hs traffic, s hs traffic
//!              |
//!        derive_secret(., "derived", "")
//!              |
//!     0 -> HKDF-Extract = master_secret --> c ap traffic, s ap traffic,
//!                                           exp master, res master
//! ```

use serde::Serialize;
use zeroize::Zeroizing;

use crate::crypto::{derive_secret, hkdf_expand_label, hkdf_extract, HashAlg, SuiteId, SuiteParams};
use crate::error::Error;
use crate::Protocol;

type Secret = Zeroizing<Vec<u8>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Stage {
    Fresh,
    Early,
    Handshake,
    Master,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PskKind {
    External,
    Resumption,
}

/// Sequence numbers are capped at 2^48 records per epoch.
pub const MAX_RECORD_SEQ: u64 = 1 << 48;

/// Per-direction record protection material.
#[derive(Clone, PartialEq, Eq)]
pub struct TrafficKeys {
    pub suite: SuiteParams,
    pub key: Secret,
    pub iv: Secret,
    /// Sequence-number encryption key; DTLS only.
    pub sn_key: Option<Secret>,
    seq: u64,
}

impl std::fmt::Debug for TrafficKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrafficKeys").field("suite", &self.suite.id).field("seq", &self.seq).finish_non_exhaustive()
    }
}

impl TrafficKeys {
    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Returns the current sequence number and advances the counter.
    pub fn next_seq(&mut self) -> Result<u64, Error> {
        if self.seq >= MAX_RECORD_SEQ {
            return Err(Error::SequenceOverflow);
        }
        let s = self.seq;
        self.seq += 1;
        Ok(s)
    }

    /// Counters never go backwards.
    pub fn advance_to(&mut self, seq: u64) -> Result<(), Error> {
        if seq > MAX_RECORD_SEQ {
            return Err(Error::SequenceOverflow);
        }
        self.seq = self.seq.max(seq);
        Ok(())
    }
}

pub fn traffic_keys(secret: &[u8], suite: SuiteParams, protocol: Protocol) -> Result<TrafficKeys, Error> {
    let h = suite.hash_alg;
    if secret.len() != suite.hash_len {
        return Err(Error::InvalidKeyLength);
    }
    let key = hkdf_expand_label(h, secret, "key", &[], suite.key_len, protocol)?;
    let iv = hkdf_expand_label(h, secret, "iv", &[], suite.iv_len, protocol)?;
    let sn_key = match protocol {
        Protocol::Dtls => Some(Zeroizing::new(hkdf_expand_label(h, secret, "sn", &[], suite.key_len, protocol)?)),
        Protocol::Tls => None,
    };
    Ok(TrafficKeys { suite, key: Zeroizing::new(key), iv: Zeroizing::new(iv), sn_key, seq: 0 })
}

pub fn finished_key(hash: HashAlg, base_secret: &[u8], protocol: Protocol) -> Result<Vec<u8>, Error> {
    hkdf_expand_label(hash, base_secret, "finished", &[], hash.output_len(), protocol)
}

/// HMAC(finished_key(base), transcript_hash)
pub fn finished_mac(
    hash: HashAlg,
    base_secret: &[u8],
    transcript_hash: &[u8],
    protocol: Protocol,
) -> Result<Vec<u8>, Error> {
    let fk = Zeroizing::new(finished_key(hash, base_secret, protocol)?);
    Ok(hash.hmac(&fk, transcript_hash))
}

pub fn verify_finished(
    hash: HashAlg,
    base_secret: &[u8],
    transcript_hash: &[u8],
    mac: &[u8],
    protocol: Protocol,
) -> Result<bool, Error> {
    let fk = Zeroizing::new(finished_key(hash, base_secret, protocol)?);
    Ok(hash.hmac_verify(&fk, transcript_hash, mac))
}

/// The full secret tree of one connection.
#[derive(Clone)]
pub struct KeySchedule {
    suite: SuiteParams,
    protocol: Protocol,
    stage: Stage,
    early_secret: Option<Secret>,
    binder_key: Option<Secret>,
    client_early_traffic: Option<Secret>,
    handshake_secret: Option<Secret>,
    client_hs_traffic: Option<Secret>,
    server_hs_traffic: Option<Secret>,
    master_secret: Option<Secret>,
    client_ap_traffic: Option<Secret>,
    server_ap_traffic: Option<Secret>,
    exporter_master: Option<Secret>,
    resumption_master: Option<Secret>,
}

impl std::fmt::Debug for KeySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeySchedule")
            .field("suite", &self.suite.id)
            .field("protocol", &self.protocol)
            .field("stage", &self.stage)
            .finish_non_exhaustive()
    }
}

macro_rules! accessor {
    ($name:ident, $what:literal) => {
        pub fn $name(&self) -> Result<&[u8], Error> {
            self.$name.as_deref().map(|v| v.as_slice()).ok_or(Error::WrongStage { op: $what, stage: self.stage })
        }
    };
}

impl KeySchedule {
    pub fn new(suite: SuiteId, protocol: Protocol) -> Result<Self, Error> {
        Ok(KeySchedule {
            suite: suite.params()?,
            protocol,
            stage: Stage::Fresh,
            early_secret: None,
            binder_key: None,
            client_early_traffic: None,
            handshake_secret: None,
            client_hs_traffic: None,
            server_hs_traffic: None,
            master_secret: None,
            client_ap_traffic: None,
            server_ap_traffic: None,
            exporter_master: None,
            resumption_master: None,
        })
    }

    /// Fresh schedule advanced through `init_early`.
    pub fn with_psk(suite: SuiteId, protocol: Protocol, psk: Option<&[u8]>, kind: PskKind) -> Result<Self, Error> {
        let mut ks = KeySchedule::new(suite, protocol)?;
        ks.init_early(psk, kind)?;
        Ok(ks)
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn suite(&self) -> SuiteParams {
        self.suite
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn hash(&self) -> HashAlg {
        self.suite.hash_alg
    }

    fn require(&self, op: &'static str, stage: Stage) -> Result<(), Error> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(Error::WrongStage { op, stage: self.stage })
        }
    }

    fn zeros(&self) -> Vec<u8> {
        vec![0u8; self.suite.hash_len]
    }

    fn derive(&self, secret: &[u8], label: &str, transcript_hash: &[u8]) -> Result<Secret, Error> {
        Ok(Zeroizing::new(derive_secret(self.hash(), secret, label, transcript_hash, self.protocol)?))
    }

    fn empty_hash(&self) -> Vec<u8> {
        self.hash().hash(&[])
    }

    pub fn init_early(&mut self, psk: Option<&[u8]>, kind: PskKind) -> Result<(), Error> {
        self.require("init_early", Stage::Fresh)?;
        if psk.is_some_and(|p| p.len() > 64) {
            return Err(Error::InvalidKeyLength);
        }
        let zeros = self.zeros();
        let early = hkdf_extract(self.hash(), &zeros, psk.unwrap_or(&zeros));
        let label = match kind {
            PskKind::External => "ext binder",
            PskKind::Resumption => "res binder",
        };
        self.binder_key = Some(self.derive(&early, label, &self.empty_hash())?);
        self.early_secret = Some(Zeroizing::new(early));
        self.stage = Stage::Early;
        Ok(())
    }

    pub fn derive_early_traffic(&mut self, th_client_hello: &[u8]) -> Result<Vec<u8>, Error> {
        self.require("derive_early_traffic", Stage::Early)?;
        let s = self.derive(self.early_secret()?, "c e traffic", th_client_hello)?;
        let out = s.to_vec();
        self.client_early_traffic = Some(s);
        Ok(out)
    }

    pub fn advance_handshake(&mut self, dh_shared: Option<&[u8]>, th_server_hello: &[u8]) -> Result<(), Error> {
        self.require("advance_handshake", Stage::Early)?;
        let derived = self.derive(self.early_secret()?, "derived", &self.empty_hash())?;
        let zeros = self.zeros();
        let hs = Zeroizing::new(hkdf_extract(self.hash(), &derived, dh_shared.unwrap_or(&zeros)));
        self.client_hs_traffic = Some(self.derive(&hs, "c hs traffic", th_server_hello)?);
        self.server_hs_traffic = Some(self.derive(&hs, "s hs traffic", th_server_hello)?);
        self.handshake_secret = Some(hs);
        self.stage = Stage::Handshake;
        Ok(())
    }

    pub fn advance_master(&mut self, th_server_finished: &[u8]) -> Result<(), Error> {
        self.require("advance_master", Stage::Handshake)?;
        let derived = self.derive(self.handshake_secret()?, "derived", &self.empty_hash())?;
        let ms = Zeroizing::new(hkdf_extract(self.hash(), &derived, &self.zeros()));
        self.client_ap_traffic = Some(self.derive(&ms, "c ap traffic", th_server_finished)?);
        self.server_ap_traffic = Some(self.derive(&ms, "s ap traffic", th_server_finished)?);
        self.exporter_master = Some(self.derive(&ms, "exp master", th_server_finished)?);
        self.master_secret = Some(ms);
        self.stage = Stage::Master;
        Ok(())
    }

    /// Folds the client Finished into the tree.
    pub fn derive_resumption_master(&mut self, th_client_finished: &[u8]) -> Result<(), Error> {
        self.require("derive_resumption_master", Stage::Master)?;
        self.resumption_master = Some(self.derive(self.master_secret()?, "res master", th_client_finished)?);
        Ok(())
    }

    pub fn resumption_psk(&self, ticket_nonce: &[u8]) -> Result<Vec<u8>, Error> {
        let rms =
            self.resumption_master.as_deref().ok_or(Error::WrongStage { op: "resumption_psk", stage: self.stage })?;
        hkdf_expand_label(self.hash(), rms, "resumption", ticket_nonce, self.suite.hash_len, self.protocol)
    }

    /// HMAC over the hash of the ClientHello truncated before the binders.
    pub fn compute_binder(&self, th_truncated: &[u8]) -> Result<Vec<u8>, Error> {
        if self.stage < Stage::Early {
            return Err(Error::WrongStage { op: "compute_binder", stage: self.stage });
        }
        finished_mac(self.hash(), self.binder_key()?, th_truncated, self.protocol)
    }

    pub fn verify_binder(&self, th_truncated: &[u8], binder: &[u8]) -> Result<bool, Error> {
        if self.stage < Stage::Early {
            return Err(Error::WrongStage { op: "verify_binder", stage: self.stage });
        }
        verify_finished(self.hash(), self.binder_key()?, th_truncated, binder, self.protocol)
    }

    pub fn traffic_keys(&self, secret: &[u8]) -> Result<TrafficKeys, Error> {
        traffic_keys(secret, self.suite, self.protocol)
    }

    accessor!(early_secret, "early_secret");
    accessor!(binder_key, "binder_key");
    accessor!(client_early_traffic, "client_early_traffic");
    accessor!(handshake_secret, "handshake_secret");
    accessor!(client_hs_traffic, "client_hs_traffic");
    accessor!(server_hs_traffic, "server_hs_traffic");
    accessor!(master_secret, "master_secret");
    accessor!(client_ap_traffic, "client_ap_traffic");
    accessor!(server_ap_traffic, "server_ap_traffic");
    accessor!(exporter_master, "exporter_master");
    accessor!(resumption_master, "resumption_master");

    /// All secrets derived so far as `(name, bytes)`, in tree order.
    pub fn audit(&self) -> Vec<(&'static str, Vec<u8>)> {
        [
            ("early_secret", &self.early_secret),
            ("binder_key", &self.binder_key),
            ("client_early_traffic", &self.client_early_traffic),
            ("handshake_secret", &self.handshake_secret),
            ("client_hs_traffic", &self.client_hs_traffic),
            ("server_hs_traffic", &self.server_hs_traffic),
            ("master_secret", &self.master_secret),
            ("client_ap_traffic", &self.client_ap_traffic),
            ("server_ap_traffic", &self.server_ap_traffic),
            ("exporter_master", &self.exporter_master),
            ("resumption_master", &self.resumption_master),
        ]
        .into_iter()
        .filter_map(|(n, s)| s.as_ref().map(|v| (n, v.to_vec())))
        .collect()
    }

    /// NSS key-log style lines: `<LABEL> <client_random-hex> <secret-hex>`.
    pub fn keylog_lines(&self, client_random: &[u8; 32]) -> Vec<String> {
        let cr = hex::encode(client_random);
        [
            ("CLIENT_EARLY_TRAFFIC_SECRET", &self.client_early_traffic),
            ("CLIENT_HANDSHAKE_TRAFFIC_SECRET", &self.client_hs_traffic),
            ("SERVER_HANDSHAKE_TRAFFIC_SECRET", &self.server_hs_traffic),
            ("CLIENT_TRAFFIC_SECRET_0", &self.client_ap_traffic),
            ("SERVER_TRAFFIC_SECRET_0", &self.server_ap_traffic),
            ("EXPORTER_SECRET", &self.exporter_master),
        ]
        .into_iter()
        .filter_map(|(label, s)| s.as_ref().map(|v| format!("{label} {cr} {}", hex::encode(v.as_slice()))))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: SuiteId = SuiteId::AES_128_CCM_SHA256;

    fn at_stage(stage: Stage) -> KeySchedule {
        let mut ks = KeySchedule::new(SUITE, Protocol::Tls).unwrap();
        if stage >= Stage::Early {
            ks.init_early(Some(&[1u8; 16]), PskKind::External).unwrap();
        }
        if stage >= Stage::Handshake {
            ks.advance_handshake(None, &[2u8; 32]).unwrap();
        }
        if stage >= Stage::Master {
            ks.advance_master(&[3u8; 32]).unwrap();
        }
        ks
    }

    #[test]
    fn every_operation_in_every_stage() {
        let stages = [Stage::Fresh, Stage::Early, Stage::Handshake, Stage::Master];
        for &s in &stages {
            assert_eq!(at_stage(s).init_early(None, PskKind::External).is_ok(), s == Stage::Fresh);
            assert_eq!(at_stage(s).derive_early_traffic(&[0; 32]).is_ok(), s == Stage::Early);
            assert_eq!(at_stage(s).advance_handshake(None, &[0; 32]).is_ok(), s == Stage::Early);
            assert_eq!(at_stage(s).advance_master(&[0; 32]).is_ok(), s == Stage::Handshake);
            assert_eq!(at_stage(s).derive_resumption_master(&[0; 32]).is_ok(), s == Stage::Master);
            assert_eq!(at_stage(s).compute_binder(&[0; 32]).is_ok(), s >= Stage::Early);
            assert_eq!(at_stage(s).client_hs_traffic().is_ok(), s >= Stage::Handshake);
            assert_eq!(at_stage(s).client_ap_traffic().is_ok(), s == Stage::Master);
            assert!(at_stage(s).resumption_psk(&[0]).is_err());
        }
        let err = at_stage(Stage::Fresh).advance_master(&[0; 32]).unwrap_err();
        assert_eq!(err, Error::WrongStage { op: "advance_master", stage: Stage::Fresh });
    }

    #[test]
    fn binder_label_depends_on_kind() {
        let a = KeySchedule::with_psk(SUITE, Protocol::Tls, Some(&[7; 16]), PskKind::External).unwrap();
        let b = KeySchedule::with_psk(SUITE, Protocol::Tls, Some(&[7; 16]), PskKind::Resumption).unwrap();
        assert_eq!(a.early_secret().unwrap(), b.early_secret().unwrap());
        assert_ne!(a.binder_key().unwrap(), b.binder_key().unwrap());
    }

    #[test]
    fn binder_round_trip_and_binding() {
        let ks = at_stage(Stage::Early);
        let th = HashAlg::Sha256.hash(b"truncated client hello");
        let mac = ks.compute_binder(&th).unwrap();
        assert!(ks.verify_binder(&th, &mac).unwrap());
        let th2 = HashAlg::Sha256.hash(b"truncated client hell");
        assert!(!ks.verify_binder(&th2, &mac).unwrap());
    }

    #[test]
    fn traffic_keys_protocol_gate() {
        let suite = SUITE.params().unwrap();
        let secret = [5u8; 32];
        let t = traffic_keys(&secret, suite, Protocol::Tls).unwrap();
        assert!(t.sn_key.is_none());
        let d = traffic_keys(&secret, suite, Protocol::Dtls).unwrap();
        assert_eq!(d.sn_key.as_ref().unwrap().len(), 16);
        assert_ne!(t.key, d.key);
        assert_eq!(d.iv.len(), 12);
    }

    #[test]
    fn sequence_cap() {
        let mut t = traffic_keys(&[5u8; 32], SUITE.params().unwrap(), Protocol::Tls).unwrap();
        assert_eq!(t.next_seq().unwrap(), 0);
        t.advance_to(MAX_RECORD_SEQ - 1).unwrap();
        assert_eq!(t.next_seq().unwrap(), MAX_RECORD_SEQ - 1);
        assert_eq!(t.next_seq(), Err(Error::SequenceOverflow));
    }

    #[test]
    fn resumption_psk_binds_nonce() {
        let mut ks = at_stage(Stage::Master);
        ks.derive_resumption_master(&[4u8; 32]).unwrap();
        assert_ne!(ks.resumption_psk(&[0]).unwrap(), ks.resumption_psk(&[1]).unwrap());
        assert_eq!(ks.resumption_psk(&[0]).unwrap().len(), 32);
    }

    #[test]
    fn application_keys_differ_from_handshake_keys() {
        let ks = at_stage(Stage::Master);
        assert_ne!(ks.client_hs_traffic().unwrap(), ks.client_ap_traffic().unwrap());
        assert_ne!(ks.server_hs_traffic().unwrap(), ks.server_ap_traffic().unwrap());
    }

    #[test]
    fn keylog_format() {
        let ks = at_stage(Stage::Handshake);
        let lines = ks.keylog_lines(&[0xab; 32]);
        assert_eq!(lines.len(), 2);
        let parts: Vec<_> = lines[0].split(' ').collect();
        assert_eq!(parts[0], "CLIENT_HANDSHAKE_TRAFFIC_SECRET");
        assert_eq!(parts[1], "ab".repeat(32));
        assert_eq!(parts[2].len(), 64);
    }
}
