//! Second key-schedule derivation built directly on HMAC, shared by test targets.
#![allow(dead_code)]

use hmac::{Mac, SimpleHmac};
use sha2::{Digest, Sha256, Sha384};

use tls13_iot::crypto::{suite_params, SuiteId};
use tls13_iot::key_schedule::traffic_keys;
use tls13_iot::state_machine::Connection;
use tls13_iot::Protocol;

#[derive(Clone, Copy, Debug)]
pub enum H {
    S256,
    S384,
}

impl H {
    pub fn for_suite(id: SuiteId) -> H {
        match id.0 {
            0x1304 => H::S256,
            0x1302 | 0xff06 => H::S384,
            other => panic!("no oracle hash for suite {other:#06x}"),
        }
    }

    pub fn len(self) -> usize {
        match self {
            H::S256 => 32,
            H::S384 => 48,
        }
    }

    pub fn digest(self, data: &[u8]) -> Vec<u8> {
        match self {
            H::S256 => Sha256::digest(data).to_vec(),
            H::S384 => Sha384::digest(data).to_vec(),
        }
    }

    pub fn hmac(self, key: &[u8], data: &[u8]) -> Vec<u8> {
        match self {
            H::S256 => {
                let mut m = <SimpleHmac<Sha256>>::new_from_slice(key).unwrap();
                m.update(data);
                m.finalize().into_bytes().to_vec()
            }
            H::S384 => {
                let mut m = <SimpleHmac<Sha384>>::new_from_slice(key).unwrap();
                m.update(data);
                m.finalize().into_bytes().to_vec()
            }
        }
    }

    pub fn extract(self, salt: &[u8], ikm: &[u8]) -> Vec<u8> {
        let zeros = vec![0u8; self.len()];
        self.hmac(if salt.is_empty() { &zeros } else { salt }, ikm)
    }

    pub fn expand(self, prk: &[u8], info: &[u8], len: usize) -> Vec<u8> {
        let mut out = Vec::new();
        let mut block = Vec::new();
        let mut counter = 1u8;
        while out.len() < len {
            let mut input = block.clone();
            input.extend_from_slice(info);
            input.push(counter);
            block = self.hmac(prk, &input);
            out.extend_from_slice(&block);
            counter += 1;
        }
        out.truncate(len);
        out
    }

    pub fn expand_label(self, secret: &[u8], label: &str, ctx: &[u8], len: usize, protocol: Protocol) -> Vec<u8> {
        let prefix: &[u8] = match protocol {
            Protocol::Tls => b"tls13 ",
            Protocol::Dtls => b"dtls13",
        };
        let mut info = (len as u16).to_be_bytes().to_vec();
        info.push((prefix.len() + label.len()) as u8);
        info.extend_from_slice(prefix);
        info.extend_from_slice(label.as_bytes());
        info.push(ctx.len() as u8);
        info.extend_from_slice(ctx);
        self.expand(secret, &info, len)
    }

    pub fn derive(self, secret: &[u8], label: &str, messages: &[Vec<u8>], protocol: Protocol) -> Vec<u8> {
        let th = self.digest(&messages.concat());
        self.expand_label(secret, label, &th, self.len(), protocol)
    }
}

pub fn msg_type(m: &[u8]) -> u8 {
    m[0]
}

pub fn body(m: &[u8]) -> &[u8] {
    &m[4..]
}

/// Everything the oracle recomputes from the recorded inputs of one side.
pub struct Derived {
    pub secrets: Vec<(&'static str, Vec<u8>)>,
}

impl Derived {
    pub fn get(&self, name: &str) -> &[u8] {
        &self.secrets.iter().find(|(n, _)| *n == name).unwrap_or_else(|| panic!("oracle lacks {name}")).1
    }
}

pub fn replay(conn: &Connection, protocol: Protocol) -> Derived {
    let h = H::for_suite(conn.suite().unwrap());
    let inputs = conn.key_inputs();
    let t = &inputs.transcript;
    let mut out = Vec::new();

    let zeros = vec![0u8; h.len()];
    let early = h.extract(&[], inputs.psk.as_deref().unwrap_or(&zeros));
    out.push(("early_secret", early.clone()));

    let last_ch = t.iter().rposition(|m| msg_type(m) == 1).unwrap();
    let label = if inputs.resumption { "res binder" } else { "ext binder" };
    let binder_key = h.derive(&early, label, &[], protocol);
    out.push(("binder_key", binder_key.clone()));
    if inputs.psk.is_some() {
        let ch = &t[last_ch];
        let cut = ch.len() - (3 + h.len());
        let mut prefix = t[..last_ch].concat();
        prefix.extend_from_slice(&ch[..cut]);
        let fk = h.expand_label(&binder_key, "finished", &[], h.len(), protocol);
        assert_eq!(&ch[ch.len() - h.len()..], h.hmac(&fk, &h.digest(&prefix)).as_slice(), "binder");
    }
    out.push(("client_early_traffic", h.derive(&early, "c e traffic", &t[..=last_ch], protocol)));

    let ee = t.iter().position(|m| msg_type(m) == 8).unwrap();
    let sh = ee - 1;
    assert_eq!(msg_type(&t[sh]), 2);
    let hs = h.extract(&h.derive(&early, "derived", &[], protocol), inputs.dhe_shared.as_deref().unwrap_or(&zeros));
    out.push(("handshake_secret", hs.clone()));
    let c_hs = h.derive(&hs, "c hs traffic", &t[..=sh], protocol);
    let s_hs = h.derive(&hs, "s hs traffic", &t[..=sh], protocol);
    out.push(("client_hs_traffic", c_hs.clone()));
    out.push(("server_hs_traffic", s_hs.clone()));

    let finished: Vec<usize> = t.iter().enumerate().filter(|(_, m)| msg_type(m) == 20).map(|(i, _)| i).collect();
    assert_eq!(finished.len(), 2);
    let (s_fin, c_fin) = (finished[0], finished[1]);
    for (idx, base) in [(s_fin, &s_hs), (c_fin, &c_hs)] {
        let fk = h.expand_label(base, "finished", &[], h.len(), protocol);
        let expect = h.hmac(&fk, &h.digest(&t[..idx].concat()));
        assert_eq!(body(&t[idx]), expect.as_slice(), "Finished at {idx}");
    }

    let master = h.extract(&h.derive(&hs, "derived", &[], protocol), &zeros);
    out.push(("master_secret", master.clone()));
    out.push(("client_ap_traffic", h.derive(&master, "c ap traffic", &t[..=s_fin], protocol)));
    out.push(("server_ap_traffic", h.derive(&master, "s ap traffic", &t[..=s_fin], protocol)));
    out.push(("exporter_master", h.derive(&master, "exp master", &t[..=s_fin], protocol)));
    out.push(("resumption_master", h.derive(&master, "res master", &t[..=c_fin], protocol)));
    Derived { secrets: out }
}

pub fn check_connection(conn: &Connection, protocol: Protocol, what: &str) -> Derived {
    let derived = replay(conn, protocol);
    let actual = conn.secrets();
    for required in ["early_secret", "handshake_secret", "client_hs_traffic", "master_secret", "resumption_master"] {
        assert!(actual.iter().any(|(n, _)| *n == required), "{what}: missing {required}");
    }
    for (name, value) in &actual {
        assert_eq!(value.as_slice(), derived.get(name), "{what}: {name}");
    }

    let h = H::for_suite(conn.suite().unwrap());
    let params = suite_params(conn.suite().unwrap()).unwrap();
    for name in ["client_hs_traffic", "server_ap_traffic"] {
        let secret = derived.get(name);
        let keys = traffic_keys(secret, params, protocol).unwrap();
        assert_eq!(
            keys.key.as_slice(),
            h.expand_label(secret, "key", &[], params.key_len, protocol),
            "{what}: {name} key"
        );
        assert_eq!(keys.iv.as_slice(), h.expand_label(secret, "iv", &[], params.iv_len, protocol), "{what}: {name} iv");
        match protocol {
            Protocol::Dtls => assert_eq!(
                keys.sn_key.as_deref().map(Vec::as_slice),
                Some(h.expand_label(secret, "sn", &[], params.key_len, protocol).as_slice()),
                "{what}: {name} sn"
            ),
            Protocol::Tls => assert!(keys.sn_key.is_none()),
        }
    }
    derived
}
