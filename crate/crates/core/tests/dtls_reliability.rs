use rand::SeedableRng;

use tls13_iot::profiles::{resolve, CredentialStore, EndpointConfigs, Overrides};
use tls13_iot::session::Session;
use tls13_iot::sim_net::{Addr, Direction, Endpoint, NetConfig};
use tls13_iot::state_machine::{AuthMode, Connection, EventKind, Listener, MAX_RETRANSMISSIONS};
use tls13_iot::{Error, Protocol, SimRng};

const DEADLINE_MS: u64 = 300_000;

fn configs(profile: &str, mode: AuthMode, overrides: Overrides, seed: u64) -> EndpointConfigs {
    resolve(profile, &overrides)
        .unwrap()
        .configs(Protocol::Dtls, mode, None, &CredentialStore::default(), seed)
        .unwrap()
}

fn ecdsa(seed: u64) -> EndpointConfigs {
    configs("ecdsa128", AuthMode::PkMutual, Overrides::default(), seed)
}

fn session(c: EndpointConfigs, net: NetConfig, seed: u64) -> Session {
    Session::new(c.client, c.server, net, seed).unwrap()
}

fn retransmitted(s: &Session, dir: Direction) -> Vec<String> {
    s.stats().per_message.iter().filter(|m| m.retransmission && m.direction == dir).map(|m| m.name.clone()).collect()
}

fn first_flight_names(s: &Session, dir: Direction) -> Vec<String> {
    s.stats().per_message.iter().filter(|m| !m.retransmission && m.direction == dir).map(|m| m.name.clone()).collect()
}

#[test]
fn single_dropped_record_is_resent_alone() {
    let mut reference = session(ecdsa(1), NetConfig::default(), 1);
    reference.handshake(DEADLINE_MS).unwrap();
    let server_flight = first_flight_names(&reference, Direction::S2c);
    assert_eq!(server_flight[0], "ServerHello");

    // every record of the server's handshake flight but the first
    let flight_len = server_flight.iter().position(|n| n == "Finished").unwrap() + 1;
    for (index, name) in server_flight.iter().enumerate().take(flight_len).skip(1) {
        let mut s = session(ecdsa(1), NetConfig::default(), 1);
        s.link_mut().script_drop(Endpoint::Server, index);
        s.handshake(DEADLINE_MS).unwrap();
        assert_eq!(retransmitted(&s, Direction::S2c), vec![name.clone()], "drop #{index}");
        assert!(s.server().unwrap().retransmissions() >= 1);
    }
}

#[test]
fn dropped_client_record_is_resent_alone() {
    let mut reference = session(ecdsa(2), NetConfig::default(), 2);
    reference.handshake(DEADLINE_MS).unwrap();
    let client_msgs = first_flight_names(&reference, Direction::C2s);
    // ClientHello, then Certificate, CertificateVerify, Finished
    let cert = client_msgs.iter().position(|n| n == "Certificate").unwrap();
    let mut s = session(ecdsa(2), NetConfig::default(), 2);
    s.link_mut().script_drop(Endpoint::Client, cert);
    s.handshake(DEADLINE_MS).unwrap();
    assert_eq!(retransmitted(&s, Direction::C2s), vec!["Certificate".to_string()]);
}

#[test]
fn lost_server_hello_resends_whole_flight() {
    let mut s = session(ecdsa(3), NetConfig::default(), 3);
    s.link_mut().script_drop(Endpoint::Server, 0);
    s.handshake(DEADLINE_MS).unwrap();
    let resent = retransmitted(&s, Direction::S2c);
    assert_eq!(resent.first().map(String::as_str), Some("ServerHello"));
}

#[test]
fn random_loss_completes_within_backoff_limit() {
    let mut completed = 0;
    for seed in 0..10 {
        let net = NetConfig { loss_rate: 0.2, seed, ..NetConfig::default() };
        let mut s = session(ecdsa(seed), net, seed);
        if s.handshake(DEADLINE_MS).is_ok() {
            completed += 1;
            assert!(s.client().max_backoffs() <= MAX_RETRANSMISSIONS);
            assert!(s.server().unwrap().max_backoffs() <= MAX_RETRANSMISSIONS);
        }
    }
    assert!(completed >= 9, "{completed}/10");
}

#[test]
fn lossy_run_reports_retransmitted_bytes() {
    let net = NetConfig { loss_rate: 0.2, seed: 7, ..NetConfig::default() };
    let mut s = session(ecdsa(7), net, 7);
    s.handshake(DEADLINE_MS).unwrap();
    assert!(s.stats().retransmitted_bytes > 0);
}

#[test]
fn duplication_and_reordering_are_tolerated() {
    for seed in 0..20 {
        let net = NetConfig { dup_rate: 0.3, reorder_rate: 0.3, seed, ..NetConfig::default() };
        for c in [ecdsa(seed), configs("psk128", AuthMode::Psk, Overrides::default(), seed)] {
            let mut s = session(c, net.clone(), seed);
            s.handshake(DEADLINE_MS).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(s.client().secrets(), s.server().unwrap().secrets());
        }
    }
}

#[test]
fn black_hole_times_out_after_retransmission_cap() {
    let net = NetConfig { loss_rate: 1.0, ..NetConfig::default() };
    let mut s = session(ecdsa(4), net, 4);
    assert_eq!(s.handshake(DEADLINE_MS), Err(Error::HandshakeTimeout));
    assert_eq!(s.client_error(), Some(&Error::HandshakeTimeout));
    assert_eq!(s.client().retransmissions(), MAX_RETRANSMISSIONS);
}

#[test]
fn packing_reduces_datagrams() {
    let mut plain = session(ecdsa(5), NetConfig::default(), 5);
    plain.handshake(DEADLINE_MS).unwrap();
    let mut c = ecdsa(5);
    c.client.dtls.packing = true;
    c.server.dtls.packing = true;
    let mut packed = session(c, NetConfig::default(), 5);
    packed.handshake(DEADLINE_MS).unwrap();
    assert!(packed.stats().datagrams() < plain.stats().datagrams());
    assert!(packed.stats().closes());
}

fn with_cid(cid: Option<usize>) -> EndpointConfigs {
    configs("psk128", AuthMode::Psk, Overrides { cid, ..Overrides::default() }, 9)
}

#[test]
fn connection_id_survives_rebinding() {
    let mut s = session(with_cid(Some(4)), NetConfig::default(), 9);
    s.handshake(DEADLINE_MS).unwrap();
    s.settle(DEADLINE_MS).unwrap();
    assert_eq!(s.client().local_cid().map(<[u8]>::len), Some(4));
    let handshake_bytes = s.stats().total();
    let before = s.stats();

    s.rebind_client(Addr(0x0a00_0063));
    s.send_client_data(b"after rebind").unwrap();
    s.settle(DEADLINE_MS).unwrap();
    assert_eq!(s.server_mut().unwrap().take_app_data(), vec![b"after rebind".to_vec()]);
    assert!(s.events().iter().any(|e| matches!(e.kind, EventKind::AddressMigrated { .. })));
    let after = s.stats();
    let handshake_after: usize =
        after.per_message.iter().filter(|m| m.name != "ApplicationData" && m.name != "ACK").map(|m| m.bytes).sum();
    let handshake_before: usize =
        before.per_message.iter().filter(|m| m.name != "ApplicationData" && m.name != "ACK").map(|m| m.bytes).sum();
    assert_eq!(handshake_after, handshake_before);
    assert!(after.total() > handshake_bytes);

    s.send_server_data(b"reply").unwrap();
    s.settle(DEADLINE_MS).unwrap();
    assert_eq!(s.client_mut().take_app_data(), vec![b"reply".to_vec()]);
}

#[test]
fn without_connection_id_rebinding_loses_records() {
    let mut s = session(with_cid(None), NetConfig::default(), 9);
    s.handshake(DEADLINE_MS).unwrap();
    s.settle(DEADLINE_MS).unwrap();
    s.rebind_client(Addr(0x0a00_0063));
    let dropped = s.listener().dropped_datagrams();
    s.send_client_data(b"after rebind").unwrap();
    s.settle(DEADLINE_MS).unwrap();
    assert!(s.server_mut().unwrap().take_app_data().is_empty());
    assert!(s.listener().dropped_datagrams() > dropped);
}

#[test]
fn rebinding_mid_handshake_without_cid_stalls() {
    let mut s = session(with_cid(None), NetConfig::default(), 9);
    s.start().unwrap();
    // the client's first flight is out; move before its Finished
    s.run_until(DEADLINE_MS, |s| s.server().is_some()).unwrap();
    s.rebind_client(Addr(0x0a00_0063));
    assert!(s.handshake(DEADLINE_MS).is_err());
    assert!(!s.server().unwrap().is_connected());
}

#[test]
fn cookieless_hellos_allocate_no_state() {
    let c = configs("psk128", AuthMode::Psk, Overrides::default(), 10);
    let mut server_cfg = c.server.clone();
    server_cfg.dos_protection = true;
    let mut listener = Listener::new(server_cfg, SimRng::seed_from_u64(10)).unwrap();
    let mut client = Connection::client(c.client.clone(), SimRng::seed_from_u64(11), 0).unwrap();
    client.start(0).unwrap();
    let hello = client.take_outgoing().remove(0).bytes;
    for i in 0..10_000u32 {
        listener.handle_datagram(Addr(0x0b00_0000 + i), &hello, 1).unwrap();
    }
    assert_eq!(listener.connections().count(), 0);
    assert_eq!(listener.hello_retry_requests(), 10_000);
    assert_eq!(listener.take_outgoing().len(), 10_000);
}

#[test]
fn small_mtu_with_cookie_retry_under_impairment() {
    for seed in 0..20 {
        let mut c = configs("full", AuthMode::PkMutual, Overrides::default(), seed);
        for cfg in [&mut c.client, &mut c.server] {
            cfg.dtls.mtu = 150;
            cfg.dtls.packing = true;
        }
        c.server.dos_protection = true;
        let net =
            NetConfig { loss_rate: 0.2, dup_rate: 0.1, reorder_rate: 0.2, mtu: 150, seed, ..NetConfig::default() };
        let mut s = session(c, net, seed);
        match s.handshake(DEADLINE_MS) {
            Ok(()) => assert_eq!(s.client().secrets(), s.server().unwrap().secrets()),
            Err(e) => assert_eq!(e, Error::HandshakeTimeout, "seed {seed}"),
        }
    }
}
