//! Acceptance criteria 1–11. Prints one PASS/FAIL line per criterion and
//! exits non-zero only when the set of failures differs from `KNOWN_FAILURES`.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rayon::prelude::*;

use tls13_bench::emit::{emit, sign_breaches, Format};
use tls13_bench::matrix::{reference_scenarios, run_matrix};
use tls13_bench::report::run_scenario;
use tls13_bench::Scenario;
use tls13_iot::crypto::{hkdf_expand, hkdf_extract, suite_params, HashAlg, NamedGroup, SuiteId};
use tls13_iot::key_schedule::traffic_keys;
use tls13_iot::profiles::{resolve, CredentialStore, EndpointConfigs, Overrides};
use tls13_iot::record::{content_type, legacy_header_sizes, seal_dtls, DtlsRecordOpts, HeaderVersion};
use tls13_iot::session::Session;
use tls13_iot::sim_net::{Addr, Direction, Endpoint, NetConfig};
use tls13_iot::state_machine::{AuthMode, Connection, Listener, Tamper, TamperTarget, MAX_RETRANSMISSIONS};
use tls13_iot::{Error, Protocol, SimRng};

/// Criteria that do not hold with the default knobs; see the README.
const KNOWN_FAILURES: &[u32] = &[3];

const DEADLINE_MS: u64 = 300_000;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs(profile: &str, protocol: Protocol, mode: AuthMode, suite: Option<SuiteId>, seed: u64) -> EndpointConfigs {
    resolve(profile, &Overrides::default())
        .unwrap()
        .configs(protocol, mode, suite, &CredentialStore::default(), seed)
        .unwrap()
}

fn session(c: EndpointConfigs, net: NetConfig, seed: u64) -> Session {
    Session::new(c.client, c.server, net, seed).unwrap()
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn c1_minimal_record() -> Outcome {
    let start = Instant::now();
    let suite = suite_params(SuiteId::AES_128_CCM_SHA256).unwrap();
    let mut keys = traffic_keys(&[9u8; 32], suite, Protocol::Dtls).unwrap();
    let (wire, _) = seal_dtls(&mut keys, 3, content_type::APPLICATION_DATA, b"x", &DtlsRecordOpts::default()).unwrap();
    let pass = wire.len() == 20 && wire[0] == 0x23 && within(start.elapsed(), 1);
    outcome(pass, format!("{} bytes, header byte {:#04x}", wire.len(), wire[0]))
}

fn c2_header_ladder() -> Outcome {
    use HeaderVersion::*;
    let sizes = [Tls12, Dtls12, Tls13, Dtls13Min, Dtls13Max].map(legacy_header_sizes);
    let suite = suite_params(SuiteId::AES_128_CCM_SHA256).unwrap();
    let mut keys = traffic_keys(&[9u8; 32], suite, Protocol::Dtls).unwrap();
    let mut savings = Vec::new();
    let mut wide_seq = Vec::new();
    for seq_16bit in [false, true] {
        for cid in [None, Some(vec![1, 2, 3, 4])] {
            for length_present in [false, true] {
                let opts = DtlsRecordOpts { cid: cid.clone(), seq_16bit, length_present, pad_len: 0 };
                let (wire, _) = seal_dtls(&mut keys, 3, content_type::APPLICATION_DATA, b"", &opts).unwrap();
                let header = wire.len() - 1 - suite.tag_len;
                let saving = legacy_header_sizes(Dtls12) as i64 - header as i64;
                if seq_16bit {
                    wide_seq.push(saving)
                } else {
                    savings.push(saving)
                }
            }
        }
    }
    let pass = sizes == [5, 13, 5, 2, 8]
        && savings.iter().all(|s| (5..=11).contains(s))
        && savings.contains(&5)
        && savings.contains(&11);
    outcome(
        pass,
        format!("sizes {sizes:?}; savings with 8-bit seq {savings:?}; with 16-bit seq {wide_seq:?} (informational)"),
    )
}

fn c3_wire_table() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let dtls_rows: Vec<Scenario> = reference_scenarios().into_iter().filter(|s| s.protocol == Protocol::Dtls).collect();
    let mut reports = Vec::new();
    for s in &dtls_rows {
        let start = Instant::now();
        let r = run_scenario(s).unwrap();
        let threshold = if s.mode == AuthMode::Psk { 15.0 } else { 8.0 };
        let reduction = r.reduction_pct();
        let paper = r.paper.as_ref().unwrap();
        let row_ok = r.ok && r.total() < r.legacy12_total && reduction >= threshold && within(start.elapsed(), 5);
        pass &= row_ok;
        details.push(format!(
            "{} {}→{} ({:.1}% saved, need {threshold}%; vs published {}: {:+.1}%{})",
            paper.label,
            r.legacy12_total,
            r.total(),
            reduction,
            paper.paper_v13,
            paper.deviation_pct,
            if paper.warns() { ", warn" } else { "" }
        ));
        reports.push(r);
    }
    let breaches = sign_breaches(&reports).len();
    pass &= breaches == 0;
    details.push(format!("sign breaches {breaches}"));
    outcome(pass, details.join("; "))
}

fn c4_mode_ranking() -> Outcome {
    let suite = Some(SuiteId::AES_128_CCM_SHA256);
    let mut pass = true;
    let mut details = Vec::new();
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let total = |mode| {
            let r = run_scenario(&Scenario::new("full", protocol, mode, suite)).unwrap();
            assert!(r.ok);
            r.total()
        };
        let psk = total(AuthMode::Psk);
        let psk_ecdhe = total(AuthMode::PskEcdhe);
        let pk_server = total(AuthMode::PkServerOnly);
        let pk_mutual = total(AuthMode::PkMutual);
        let ordered = psk <= psk_ecdhe && psk_ecdhe < pk_server && pk_server <= pk_mutual;
        pass &= ordered;

        let mut rtts = Vec::new();
        for mode in [AuthMode::Psk, AuthMode::PskEcdhe, AuthMode::PkServerOnly, AuthMode::PkMutual, AuthMode::ZeroRtt] {
            let mut s = Scenario::new("full", protocol, mode, suite);
            s.app_payload = 16;
            let r = run_scenario(&s).unwrap();
            let rtt = r.rtt_to_first_appdata.unwrap_or(f64::NAN);
            let expected = if mode == AuthMode::ZeroRtt { 0.0 } else { 1.0 };
            pass &= r.ok && rtt == expected && r.early_data_in_first_flight == (mode == AuthMode::ZeroRtt);
            rtts.push(format!("{mode}={rtt}"));
        }
        details.push(format!(
            "{protocol}: psk {psk} ≤ psk_ecdhe {psk_ecdhe} < pk {pk_server}/{pk_mutual}; rtt {}",
            rtts.join(" ")
        ));
    }
    outcome(pass, details.join("; "))
}

fn c5_key_schedule_oracle() -> Outcome {
    let sets: [(&str, Protocol, AuthMode, Option<SuiteId>, u64); 3] = [
        ("psk128", Protocol::Tls, AuthMode::Psk, None, 21),
        ("ecdsa128_256", Protocol::Dtls, AuthMode::PkMutual, Some(SuiteId::AES_256_CCM_SHA384), 22),
        ("full", Protocol::Dtls, AuthMode::ZeroRtt, None, 24),
    ];
    let mut checked = 0;
    let result = panic::catch_unwind(AssertUnwindSafe(|| {
        for (profile, protocol, mode, suite, seed) in sets {
            let mut c = configs(profile, protocol, mode, suite, seed);
            if mode == AuthMode::ZeroRtt {
                c.client.early_data = Some(b"early".to_vec());
            }
            if mode == AuthMode::PkMutual {
                c.client.groups = vec![NamedGroup::SECP256R1, NamedGroup::SECP521R1];
                c.server.groups = vec![NamedGroup::SECP521R1];
            }
            let mut s = session(c, NetConfig::default(), seed);
            s.handshake(DEADLINE_MS).unwrap();
            for (who, conn) in [("client", s.client()), ("server", s.server().unwrap())] {
                let derived = oracle::check_connection(conn, protocol, &format!("{profile} {who}"));
                checked += derived.secrets.len();
            }
        }
        let ikm = [0x0bu8; 22];
        let salt: Vec<u8> = (0x00..=0x0c).collect();
        let info: Vec<u8> = (0xf0..=0xf9).collect();
        let prk = hex::decode("077709362c2e32df0ddc3f0dc47bba6390b6c73bb50f9c3122ec844ad7c2b3e5").unwrap();
        let okm = hex::decode("3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865")
            .unwrap();
        assert_eq!(hkdf_extract(HashAlg::Sha256, &salt, &ikm), prk);
        assert_eq!(oracle::H::S256.extract(&salt, &ikm), prk);
        assert_eq!(hkdf_expand(HashAlg::Sha256, &prk, &info, 42).unwrap(), okm);
    }));
    match result {
        Ok(()) => outcome(true, format!("3 input sets, {checked} secrets matched; HKDF extract vector matched")),
        Err(e) => outcome(false, panic_message(e)),
    }
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

/// Rebinds a profile's configs to a suite outside its table (same hash family).
fn with_suite(mut c: EndpointConfigs, suite: SuiteId) -> EndpointConfigs {
    for cfg in [&mut c.client, &mut c.server] {
        cfg.suites = vec![suite];
    }
    if let Some(p) = c.client.psk.as_mut() {
        p.suite = suite;
    }
    for p in &mut c.server.server_psks {
        p.suite = suite;
    }
    c
}

fn c6_handshake_correctness() -> Outcome {
    let start = Instant::now();
    let modes = [
        ("psk128_256", AuthMode::Psk),
        ("full", AuthMode::PskEcdhe),
        ("full", AuthMode::ZeroRtt),
        ("ecdsa128_256", AuthMode::PkServerOnly),
        ("ecdsa128_256", AuthMode::PkMutual),
    ];
    let suites = [
        (SuiteId::AES_128_CCM_SHA256, SuiteId::AES_128_CCM_SHA256),
        (SuiteId::AES_256_CCM_SHA384, SuiteId::AES_256_CCM_SHA384),
        (SuiteId::AES_256_CCM_SHA384, SuiteId::AES_256_GCM_SHA384),
    ];
    let mut cases = Vec::new();
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        for (profile, mode) in modes {
            for (base, suite) in suites {
                cases.extend((0..100).map(|seed| (protocol, profile, mode, base, suite, seed)));
            }
        }
    }
    let runs = cases.len();
    let bad: Vec<String> = cases
        .into_par_iter()
        .filter_map(|(protocol, profile, mode, base, suite, seed)| {
            let mut c = with_suite(configs(profile, protocol, mode, Some(base), seed), suite);
            if mode == AuthMode::ZeroRtt {
                c.client.early_data = Some(vec![0x55; 8]);
            }
            let mut s = session(c, NetConfig { seed, ..NetConfig::default() }, seed);
            let ok = s.handshake(DEADLINE_MS).is_ok()
                && s.client().suite() == Some(suite)
                && s.client().negotiated_mode() == Some(mode)
                && s.client().secrets() == s.server().unwrap().secrets();
            (!ok).then(|| format!("{protocol}/{mode}/{}/{seed}", suite.cli_name()))
        })
        .collect();

    let tamper = |protocol, mode: AuthMode, target, on_client: bool| {
        let profile = if mode.uses_certificates() { "ecdsa128" } else { "psk128" };
        let mut s = session(configs(profile, protocol, mode, None, 3), NetConfig::default(), 3);
        let t = Some(Tamper { target, bit: 0 });
        if on_client {
            s.client_mut().set_tamper(t);
        } else {
            s.listener_mut().set_tamper(t);
        }
        let failed = s.handshake(DEADLINE_MS).is_err();
        let detecting = if on_client { s.server_error() } else { s.client_error() };
        (failed, detecting.cloned())
    };
    let mut tamper_ok = true;
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let cases = [
            (AuthMode::Psk, TamperTarget::Binder, true, Error::BadBinder),
            (AuthMode::Psk, TamperTarget::Finished, true, Error::BadFinished),
            (AuthMode::Psk, TamperTarget::Finished, false, Error::BadFinished),
            (AuthMode::PkServerOnly, TamperTarget::CertificateVerify, false, Error::BadSignature),
            (AuthMode::PkMutual, TamperTarget::CertificateVerify, true, Error::BadSignature),
        ];
        for (mode, target, on_client, expected) in cases {
            let (failed, err) = tamper(protocol, mode, target, on_client);
            tamper_ok &= failed && err == Some(expected);
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && tamper_ok && within(elapsed, 30);
    outcome(
        pass,
        format!(
            "{runs} runs, {} mismatches; tamper errors distinct: {tamper_ok}; {:.1}s",
            bad.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn retransmitted(s: &Session, dir: Direction) -> Vec<String> {
    s.stats().per_message.iter().filter(|m| m.retransmission && m.direction == dir).map(|m| m.name.clone()).collect()
}

fn c7_retransmission() -> Outcome {
    let ecdsa = |seed| configs("ecdsa128", Protocol::Dtls, AuthMode::PkMutual, None, seed);
    let mut reference = session(ecdsa(1), NetConfig::default(), 1);
    reference.handshake(DEADLINE_MS).unwrap();
    let flight: Vec<String> = reference
        .stats()
        .per_message
        .iter()
        .filter(|m| m.direction == Direction::S2c)
        .map(|m| m.name.clone())
        .collect();
    let flight_len = flight.iter().position(|n| n == "Finished").unwrap() + 1;
    let mut granular = true;
    for (index, name) in flight.iter().enumerate().take(flight_len).skip(1) {
        let mut s = session(ecdsa(1), NetConfig::default(), 1);
        s.link_mut().script_drop(Endpoint::Server, index);
        granular &= s.handshake(DEADLINE_MS).is_ok() && retransmitted(&s, Direction::S2c) == [name.clone()];
    }

    let mut completed = 0;
    for seed in 0..10 {
        let net = NetConfig { loss_rate: 0.2, seed, ..NetConfig::default() };
        let mut s = session(ecdsa(seed), net, seed);
        if s.handshake(DEADLINE_MS).is_ok()
            && s.client().max_backoffs() <= MAX_RETRANSMISSIONS
            && s.server().unwrap().max_backoffs() <= MAX_RETRANSMISSIONS
        {
            completed += 1;
        }
    }
    outcome(
        granular && completed >= 9,
        format!("single drops of {} server records resent alone: {granular}; 20% loss {completed}/10", flight_len - 1),
    )
}

fn c8_stateless_cookie() -> Outcome {
    let start = Instant::now();
    let c = configs("psk128", Protocol::Dtls, AuthMode::Psk, None, 10);
    let mut server_cfg = c.server.clone();
    server_cfg.dos_protection = true;
    let mut listener = Listener::new(server_cfg, SimRng::seed_from_u64(10)).unwrap();
    let mut client = Connection::client(c.client.clone(), SimRng::seed_from_u64(11), 0).unwrap();
    client.start(0).unwrap();
    let hello = client.take_outgoing().remove(0).bytes;
    for i in 0..10_000u32 {
        listener.handle_datagram(Addr(0x0b00_0000 + i), &hello, 1).unwrap();
    }
    let states = listener.connections().count();
    let hrrs = listener.hello_retry_requests();
    let replies = listener.take_outgoing();

    // the real client answers the retry sent to its own address
    let addr = Addr(0x0b00_0000);
    let mut to_client: Vec<Vec<u8>> = replies.into_iter().filter(|(a, _)| *a == addr).map(|(_, o)| o.bytes).collect();
    let mut completed = false;
    for now in 2..22 {
        for d in to_client.drain(..) {
            let _ = client.handle_datagram(&d, now);
        }
        for out in client.take_outgoing() {
            let _ = listener.handle_datagram(addr, &out.bytes, now);
        }
        to_client = listener.take_outgoing().into_iter().filter(|(a, _)| *a == addr).map(|(_, o)| o.bytes).collect();
        if client.is_connected() && listener.connection_for(addr).is_some_and(|c| c.is_connected()) {
            completed = true;
            break;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        states == 0 && hrrs == 10_000 && completed && within(elapsed, 10),
        format!("{states} states, {hrrs} retries; cookie retry completed: {completed}; {:.2}s", elapsed.as_secs_f64()),
    )
}

fn handshake_bytes(s: &Session) -> usize {
    s.stats().per_message.iter().filter(|m| m.name != "ApplicationData" && m.name != "ACK").map(|m| m.bytes).sum()
}

fn c9_cid_continuity() -> Outcome {
    let with_cid = |cid| {
        let o = Overrides { cid, ..Overrides::default() };
        resolve("psk128", &o)
            .unwrap()
            .configs(Protocol::Dtls, AuthMode::Psk, None, &CredentialStore::default(), 9)
            .unwrap()
    };
    let mut s = session(with_cid(Some(4)), NetConfig::default(), 9);
    s.handshake(DEADLINE_MS).unwrap();
    s.settle(DEADLINE_MS).unwrap();
    let before = handshake_bytes(&s);
    s.rebind_client(Addr(0x0a00_0063));
    s.send_client_data(b"after rebind").unwrap();
    s.settle(DEADLINE_MS).unwrap();
    let delivered = s.server_mut().unwrap().take_app_data() == [b"after rebind".to_vec()];
    let extra = handshake_bytes(&s) - before;

    let mut s = session(with_cid(None), NetConfig::default(), 9);
    s.handshake(DEADLINE_MS).unwrap();
    s.settle(DEADLINE_MS).unwrap();
    s.rebind_client(Addr(0x0a00_0063));
    let dropped_before = s.listener().dropped_datagrams();
    s.send_client_data(b"after rebind").unwrap();
    s.settle(DEADLINE_MS).unwrap();
    let lost = s.server_mut().unwrap().take_app_data().is_empty();
    let dropped = s.listener().dropped_datagrams() - dropped_before;
    outcome(
        delivered && extra == 0 && lost && dropped > 0,
        format!(
            "with CID delivered {delivered}, {extra} extra handshake bytes; without CID lost {lost}, {dropped} dropped"
        ),
    )
}

fn c10_asymmetric_ops() -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for protocol in [Protocol::Tls, Protocol::Dtls] {
        let psk = run_scenario(&Scenario::new("psk128", protocol, AuthMode::Psk, None)).unwrap();
        for ops in [psk.client_ops, psk.server_ops] {
            pass &= psk.ok && ops.dh_ops == 0 && ops.sign_ops == 0 && ops.verify_ops == 0;
        }
        let pk = run_scenario(&Scenario::new("ecdsa128", protocol, AuthMode::PkMutual, None)).unwrap();
        for ops in [pk.client_ops, pk.server_ops] {
            pass &= pk.ok && ops.dh_ops >= 2 && ops.sign_ops >= 1 && ops.verify_ops >= 2;
        }
        details.push(format!(
            "{protocol}: psk c{}/s{} asym, ecdhe-ecdsa client dh{} sign{} verify{} server dh{} sign{} verify{}",
            psk.client_ops.asymmetric(),
            psk.server_ops.asymmetric(),
            pk.client_ops.dh_ops,
            pk.client_ops.sign_ops,
            pk.client_ops.verify_ops,
            pk.server_ops.dh_ops,
            pk.server_ops.sign_ops,
            pk.server_ops.verify_ops
        ));
    }
    outcome(pass, details.join("; "))
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut scenarios = reference_scenarios();
    let mut lossy = Scenario::new("ecdsa128", Protocol::Dtls, AuthMode::PkMutual, None);
    lossy.net.loss_rate = 0.2;
    lossy.net.seed = 7;
    scenarios.push(lossy);
    let render = || emit(&run_matrix(&scenarios).unwrap(), Format::Json, true).unwrap();
    let library_same = render() == render();

    let bench = env!("CARGO_BIN_EXE_bench");
    let run_cli = |name: &str| {
        let path = dir.path().join(name);
        let status = Command::new(bench)
            .args(["run", "--profile", "ecdsa128", "--protocol", "dtls", "--mode", "pk_mutual"])
            .args(["--loss", "0.2", "--seed", "7", "--format", "json", "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let cli_same = run_cli("a.json") == run_cli("b.json");
    outcome(
        library_same && cli_same,
        format!("matrix re-run identical: {library_same}; CLI report files identical: {cli_same}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "minimal DTLS 1.3 record", c1_minimal_record),
        (2, "header-size ladder", c2_header_ladder),
        (3, "wire-table direction", c3_wire_table),
        (4, "mode ranking and first application data", c4_mode_ranking),
        (5, "key-schedule oracle", c5_key_schedule_oracle),
        (6, "handshake correctness", c6_handshake_correctness),
        (7, "retransmission granularity", c7_retransmission),
        (8, "stateless cookie", c8_stateless_cookie),
        (9, "connection ID continuity", c9_cid_continuity),
        (10, "asymmetric operation counts", c10_asymmetric_ops),
        (11, "determinism", c11_determinism),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        let o =
            panic::catch_unwind(check).unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(e))));
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if failed == KNOWN_FAILURES {
        println!("acceptance: {} of 11 pass; known failures {KNOWN_FAILURES:?}", 11 - failed.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failures {failed:?} differ from the known set {KNOWN_FAILURES:?}");
        ExitCode::FAILURE
    }
}
