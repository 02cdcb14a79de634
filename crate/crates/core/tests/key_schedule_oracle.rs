//! Key-schedule checks against a second derivation built directly on HMAC.

mod oracle;

use oracle::{check_connection, msg_type, H};
use tls13_iot::crypto::{hkdf_expand, hkdf_expand_label, hkdf_extract, HashAlg, NamedGroup, SuiteId};
use tls13_iot::profiles::{resolve, CredentialStore, EndpointConfigs, Overrides};
use tls13_iot::session::Session;
use tls13_iot::sim_net::NetConfig;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

const DEADLINE_MS: u64 = 120_000;

fn configs(profile: &str, protocol: Protocol, mode: AuthMode, suite: Option<SuiteId>, seed: u64) -> EndpointConfigs {
    resolve(profile, &Overrides::default())
        .unwrap()
        .configs(protocol, mode, suite, &CredentialStore::default(), seed)
        .unwrap()
}

fn run(c: EndpointConfigs, seed: u64) -> Session {
    let mut s = Session::new(c.client, c.server, NetConfig::default(), seed).unwrap();
    s.handshake(DEADLINE_MS).unwrap();
    s.settle(DEADLINE_MS).unwrap();
    s
}

fn check_both(s: &Session, protocol: Protocol, what: &str) {
    check_connection(s.client(), protocol, &format!("{what} client"));
    check_connection(s.server().unwrap(), protocol, &format!("{what} server"));
    assert_eq!(s.client().key_inputs(), s.server().unwrap().key_inputs(), "{what}");
}

#[test]
fn external_psk_without_dhe() {
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let s = run(configs("psk128", protocol, AuthMode::Psk, None, 21), 21);
        assert!(s.client().key_inputs().dhe_shared.is_none());
        check_both(&s, protocol, &format!("{protocol} psk"));
    }
}

#[test]
fn wide_suite_after_hello_retry() {
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let mut c = configs("ecdsa128_256", protocol, AuthMode::PkMutual, Some(SuiteId::AES_256_CCM_SHA384), 22);
        c.client.groups = vec![NamedGroup::SECP256R1, NamedGroup::SECP521R1];
        c.server.groups = vec![NamedGroup::SECP521R1];
        let s = run(c, 22);
        assert_eq!(s.listener().hello_retry_requests(), 1);
        assert_eq!(msg_type(&s.client().key_inputs().transcript[0]), 254);
        check_both(&s, protocol, &format!("{protocol} p521 hrr"));
    }
}

#[test]
fn psk_with_dhe_and_early_data() {
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let s = run(configs("full", protocol, AuthMode::PskEcdhe, None, 23), 23);
        assert!(s.client().key_inputs().dhe_shared.is_some());
        check_both(&s, protocol, &format!("{protocol} psk_ecdhe"));

        let mut c = configs("full", protocol, AuthMode::ZeroRtt, None, 24);
        c.client.early_data = Some(b"early".to_vec());
        let s = run(c, 24);
        assert!(s.client().secrets().iter().any(|(n, _)| *n == "client_early_traffic"));
        check_both(&s, protocol, &format!("{protocol} 0-rtt"));
    }
}

#[test]
fn cookie_retry_binds_binder_to_retry_prefix() {
    let mut c = configs("psk128", Protocol::Dtls, AuthMode::Psk, None, 25);
    c.server.dos_protection = true;
    let s = run(c, 25);
    assert_eq!(s.listener().hello_retry_requests(), 1);
    check_both(&s, Protocol::Dtls, "cookie retry");
}

#[test]
fn resumption_secret_and_ticket_psk() {
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let mut first = run(configs("full", protocol, AuthMode::PkMutual, None, 26), 26);
        let derived = check_connection(first.client(), protocol, "first");
        let tickets = first.client_mut().take_tickets();
        assert_eq!(tickets.len(), 1);
        let h = H::for_suite(first.client().suite().unwrap());
        let rms = derived.get("resumption_master");
        let expected = h.expand_label(rms, "resumption", &0u32.to_be_bytes(), h.len(), protocol);
        assert_eq!(tickets[0].psk, expected, "{protocol}");

        let mut c = configs("full", protocol, AuthMode::ZeroRtt, None, 27);
        c.client.psk = Some(tickets[0].to_psk_config());
        c.server.server_psks.clear();
        c.client.early_data = Some(b"resumed".to_vec());
        let mut s = Session::new(c.client, c.server, NetConfig::default(), 27).unwrap();
        for e in first.listener().tickets() {
            s.listener_mut().insert_ticket(e.clone());
        }
        s.handshake(DEADLINE_MS).unwrap();
        assert!(s.client().key_inputs().resumption);
        check_both(&s, protocol, &format!("{protocol} resumed"));
    }
}

#[test]
fn hkdf_matches_published_vectors() {
    // basic SHA-256 case
    let ikm = [0x0bu8; 22];
    let salt: Vec<u8> = (0x00..=0x0c).collect();
    let info: Vec<u8> = (0xf0..=0xf9).collect();
    let prk = hex::decode("077709362c2e32df0ddc3f0dc47bba6390b6c73bb50f9c3122ec844ad7c2b3e5").unwrap();
    let okm =
        hex::decode("3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865").unwrap();
    assert_eq!(H::S256.extract(&salt, &ikm), prk);
    assert_eq!(H::S256.expand(&prk, &info, 42), okm);
    assert_eq!(hkdf_extract(HashAlg::Sha256, &salt, &ikm), prk);
    assert_eq!(hkdf_expand(HashAlg::Sha256, &prk, &info, 42).unwrap(), okm);

    // zero-length salt and info
    let prk = hex::decode("19ef24a32c717b167f33a91d6f648bdf96596776afdb6377ac434c1c293ccb04").unwrap();
    let okm =
        hex::decode("8da4e775a563c18f715f802a063c5a31b8a11f5c5ee1879ec3454e5f3c738d2d9d201395faa4b61a96c8").unwrap();
    assert_eq!(H::S256.extract(&[], &ikm), prk);
    assert_eq!(H::S256.expand(&prk, &[], 42), okm);
    assert_eq!(hkdf_extract(HashAlg::Sha256, &[], &ikm), prk);
    assert_eq!(hkdf_expand(HashAlg::Sha256, &prk, &[], 42).unwrap(), okm);
}

#[test]
fn tls_schedule_matches_published_trace() {
    let h = H::S256;
    let p = Protocol::Tls;
    let zeros = [0u8; 32];
    let early = h.extract(&[], &zeros);
    assert_eq!(hex::encode(&early), "33ad0a1c607ec03b09e6cd9893680ce210adf300aa1f2660e1b22e10f170f92a");
    let derived = h.derive(&early, "derived", &[], p);
    assert_eq!(hex::encode(&derived), "6f2615a108c702c5678f54fc9dbab69716c076189c48250cebeac3576c3611ba");
    let shared = hex::decode("8bd4054fb55b9d63fdfbacf9f04b9f0d35e6d63f537563efd46272900f89492d").unwrap();
    let hs = h.extract(&derived, &shared);
    assert_eq!(hex::encode(&hs), "1dc826e93606aa6fdc0aadc12f741b01046aa6b99f691ed221a9f0ca043fbeac");
    let derived2 = h.derive(&hs, "derived", &[], p);
    assert_eq!(hex::encode(&derived2), "43de77e0c77713859a944db9db2590b53190a65b3ee2e4f12dd7a0bb7ce254b4");
    let master = h.extract(&derived2, &zeros);
    assert_eq!(hex::encode(&master), "18df06843d13a08bf2a449844c5f8a478001bc4d4c627984d5a41da8d0402919");

    let empty = HashAlg::Sha256.hash(&[]);
    let lib_derived = hkdf_expand_label(HashAlg::Sha256, &early, "derived", &empty, 32, p).unwrap();
    assert_eq!(lib_derived, derived);
}

#[test]
fn dtls_labels_differ_from_tls_labels() {
    let secret = [7u8; 32];
    for (label, len) in [("key", 16), ("iv", 12), ("sn", 16), ("finished", 32)] {
        let tls = h_lib(&secret, label, len, Protocol::Tls);
        let dtls = h_lib(&secret, label, len, Protocol::Dtls);
        assert_ne!(tls, dtls);
        assert_eq!(tls, H::S256.expand_label(&secret, label, &[], len, Protocol::Tls));
        assert_eq!(dtls, H::S256.expand_label(&secret, label, &[], len, Protocol::Dtls));
    }
}

fn h_lib(secret: &[u8], label: &str, len: usize, p: Protocol) -> Vec<u8> {
    hkdf_expand_label(HashAlg::Sha256, secret, label, &[], len, p).unwrap()
}
