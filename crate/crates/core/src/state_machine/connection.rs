use std::collections::BTreeMap;
use std::mem;

use crate::codec::Reader;
use crate::crypto::{EcPrivateKey, SuiteId, Transcript};
use crate::error::{DecodeError, Error};
use crate::key_schedule::{KeySchedule, TrafficKeys};
use crate::messages::{
    build_ack, decode_handshake, dtls_to_tls_form, encode_handshake, ext_type, fragment, Ack, ClientHello,
    DtlsFragment, HandshakeMessage, Reassembly, RecordNumber,
};
use crate::record::{
    ccs_record, content_type, dtls_plaintext_record, open_dtls, open_tls, plaintext_record, seal_dtls, seal_tls,
    split_datagram, split_stream, DtlsRecordOpts, DtlsRecordSlice, ReplayWindow, TlsRecord, UnifiedHeader,
    DTLS_PLAINTEXT_HEADER,
};
use crate::{Protocol, SimRng};

use super::config::{AuthMode, ClientTicket, Config};
use super::listener::TicketEntry;
use super::{
    alert, Event, EventKind, OpCounters, Outgoing, Phase, Role, WirePart, INITIAL_RTO_MS, MAX_RETRANSMISSIONS,
};

pub(crate) const EPOCH_EARLY: u64 = 1;
pub(crate) const EPOCH_HANDSHAKE: u64 = 2;
pub(crate) const EPOCH_APPLICATION: u64 = 3;

const MAX_BUFFERED_RECORDS: usize = 32;
const MAX_TLS_FRAGMENT: usize = 1 << 14;

// HKDF invocations per key-schedule step, for the cost counters.
pub(crate) const HKDF_EARLY: u64 = 2;
pub(crate) const HKDF_DERIVE: u64 = 1;
pub(crate) const HKDF_HANDSHAKE: u64 = 4;
pub(crate) const HKDF_MASTER: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TamperTarget {
    Finished,
    Binder,
    CertificateVerify,
}

/// Fault injection: flips one bit of the last byte of the next outgoing
/// message carrying the target, after the sender hashed the honest copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tamper {
    pub target: TamperTarget,
    pub bit: u8,
}

impl Tamper {
    fn applies_to(&self, msg: &HandshakeMessage) -> bool {
        match self.target {
            TamperTarget::Finished => matches!(msg, HandshakeMessage::Finished(_)),
            TamperTarget::CertificateVerify => matches!(msg, HandshakeMessage::CertificateVerify(_)),
            TamperTarget::Binder => matches!(
                msg,
                HandshakeMessage::ClientHello(ch)
                    if ch.extensions.last().is_some_and(|e| e.ext_type() == ext_type::PRE_SHARED_KEY)
            ),
        }
    }
}

struct ReadState {
    keys: TrafficKeys,
    window: ReplayWindow,
}

/// One handshake fragment awaiting acknowledgement.
struct SentFragment {
    epoch: u64,
    /// Every record number this fragment went out under.
    records: Vec<RecordNumber>,
    body: Vec<u8>,
    label: &'static str,
    message_seq: u16,
    acked: bool,
}

struct Queued {
    bytes: Vec<u8>,
    part: WirePart,
    retransmission: bool,
}

#[derive(Clone, Copy, Debug)]
struct RetransmitTimer {
    deadline: u64,
    rto: u64,
    count: u32,
}

enum InRecord {
    Plain { content_type: u8, epoch: u16, seq: u64, payload: Vec<u8> },
    Protected { header: UnifiedHeader, header_bytes: Vec<u8>, ciphertext: Vec<u8> },
}

/// Handshake progress shared by the client and server code paths.
#[derive(Default)]
pub(crate) struct HsState {
    pub client_hello: Option<ClientHello>,
    pub ecdhe: Option<EcPrivateKey>,
    pub retried: bool,
    pub psk_offered: bool,
    pub psk_accepted: bool,
    pub dhe: bool,
    pub early_offered: bool,
    pub early_accepted: bool,
    pub cert_requested: bool,
    pub peer_key: Option<Vec<u8>>,
    pub peer_cv_verified: bool,
    pub ccs_sent: bool,
    pub tickets: Vec<ClientTicket>,
    pub issued: Vec<TicketEntry>,
    pub psk_error: Option<Error>,
    /// TLS server that declined 0-RTT skips records it cannot decrypt.
    pub skip_early: bool,
    pub ticket_counter: u32,
}

/// Raw inputs the key schedule consumed, for checking it against an
/// independent derivation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyInputs {
    pub psk: Option<Vec<u8>>,
    pub resumption: bool,
    pub dhe_shared: Option<Vec<u8>>,
    /// Handshake messages in transcript order, 4-byte header form.
    pub transcript: Vec<Vec<u8>>,
}

/// One endpoint of a TLS or DTLS 1.3 connection.
pub struct Connection {
    pub(crate) id: u64,
    pub(crate) role: Role,
    pub(crate) cfg: Config,
    pub(crate) phase: Phase,
    failed_in: Option<Phase>,
    pub(crate) rng: SimRng,
    pub(crate) now: u64,
    pub(crate) schedule: Option<KeySchedule>,
    pub(crate) transcript: Option<Transcript>,
    /// Client handshake bytes absorbed before the hash is known.
    pub(crate) pre_transcript: Vec<u8>,
    pub(crate) suite: Option<SuiteId>,
    pub(crate) hs: HsState,
    pub(crate) key_inputs: KeyInputs,
    pub(crate) counters: OpCounters,
    pub(crate) cid_local: Option<Vec<u8>>,
    pub(crate) cid_peer: Option<Vec<u8>>,
    pub(crate) write_epoch: u64,
    pub(crate) tls_read_epoch: u64,
    pub(crate) send_msg_seq: u16,
    pub(crate) recv_msg_seq: u16,
    pub(crate) epoch0_seq: u64,
    write_keys: BTreeMap<u64, TrafficKeys>,
    read_keys: BTreeMap<u64, ReadState>,
    read_generation: u64,
    reassembly: BTreeMap<u16, Reassembly>,
    received: Vec<RecordNumber>,
    ack_now: bool,
    ack_deadline: Option<u64>,
    sent: Vec<SentFragment>,
    flight: Vec<&'static str>,
    timer: Option<RetransmitTimer>,
    retransmissions: u32,
    max_backoffs: u32,
    buffered: Vec<InRecord>,
    stream_buf: Vec<u8>,
    hs_buf: Vec<u8>,
    queue: Vec<Queued>,
    outgoing: Vec<Outgoing>,
    events: Vec<Event>,
    app_data: Vec<Vec<u8>>,
    early_data: Vec<Vec<u8>>,
    authenticated: u64,
    tamper: Option<Tamper>,
    error: Option<Error>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("protocol", &self.cfg.protocol)
            .field("phase", &self.phase)
            .finish_non_exhaustive()
    }
}

impl Connection {
    pub(crate) fn new(role: Role, cfg: Config, rng: SimRng, id: u64) -> Self {
        Connection {
            id,
            role,
            cfg,
            phase: Phase::Start,
            failed_in: None,
            rng,
            now: 0,
            schedule: None,
            transcript: None,
            pre_transcript: Vec::new(),
            key_inputs: KeyInputs::default(),
            suite: None,
            hs: HsState::default(),
            counters: OpCounters::default(),
            cid_local: None,
            cid_peer: None,
            write_epoch: 0,
            tls_read_epoch: 0,
            send_msg_seq: 0,
            recv_msg_seq: 0,
            epoch0_seq: 0,
            write_keys: BTreeMap::new(),
            read_keys: BTreeMap::new(),
            read_generation: 0,
            reassembly: BTreeMap::new(),
            received: Vec::new(),
            ack_now: false,
            ack_deadline: None,
            sent: Vec::new(),
            flight: Vec::new(),
            timer: None,
            retransmissions: 0,
            max_backoffs: 0,
            buffered: Vec::new(),
            stream_buf: Vec::new(),
            hs_buf: Vec::new(),
            queue: Vec::new(),
            outgoing: Vec::new(),
            events: Vec::new(),
            app_data: Vec::new(),
            early_data: Vec::new(),
            authenticated: 0,
            tamper: None,
            error: None,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn protocol(&self) -> Protocol {
        self.cfg.protocol
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Phase the connection was in when it failed.
    pub fn failed_in(&self) -> Option<Phase> {
        self.failed_in
    }

    pub fn is_connected(&self) -> bool {
        self.phase == Phase::Connected
    }

    pub fn error(&self) -> Option<&Error> {
        self.error.as_ref()
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn suite(&self) -> Option<SuiteId> {
        self.suite
    }

    pub fn psk_accepted(&self) -> bool {
        self.hs.psk_accepted
    }

    pub fn early_data_accepted(&self) -> bool {
        self.hs.early_accepted
    }

    /// Why an offered PSK was not used, when the server fell back.
    pub fn psk_rejection(&self) -> Option<&Error> {
        self.hs.psk_error.as_ref()
    }

    /// What the handshake actually negotiated.
    pub fn negotiated_mode(&self) -> Option<AuthMode> {
        if self.phase != Phase::Connected {
            return None;
        }
        Some(match (self.hs.psk_accepted, self.hs.dhe) {
            (true, _) if self.hs.early_accepted => AuthMode::ZeroRtt,
            (true, true) => AuthMode::PskEcdhe,
            (true, false) => AuthMode::Psk,
            _ if self.hs.cert_requested => AuthMode::PkMutual,
            _ => AuthMode::PkServerOnly,
        })
    }

    pub fn local_cid(&self) -> Option<&[u8]> {
        self.cid_local.as_deref()
    }

    pub fn peer_cid(&self) -> Option<&[u8]> {
        self.cid_peer.as_deref()
    }

    /// Retransmission timer expiries handled so far.
    pub fn retransmissions(&self) -> u32 {
        self.retransmissions
    }

    /// Most timer expiries any single flight went through.
    pub fn max_backoffs(&self) -> u32 {
        self.max_backoffs
    }

    /// Handshake messages sent but not yet acknowledged.
    pub fn unacked_messages(&self) -> usize {
        let mut seqs: Vec<u16> = self.sent.iter().filter(|f| !f.acked).map(|f| f.message_seq).collect();
        seqs.dedup();
        seqs.len()
    }

    /// Records that passed authentication.
    pub fn authenticated_records(&self) -> u64 {
        self.authenticated
    }

    /// Derived secrets in key-schedule order.
    pub fn secrets(&self) -> Vec<(&'static str, Vec<u8>)> {
        self.schedule.as_ref().map(|s| s.audit()).unwrap_or_default()
    }

    pub fn key_inputs(&self) -> &KeyInputs {
        &self.key_inputs
    }

    pub fn set_tamper(&mut self, tamper: Option<Tamper>) {
        self.tamper = tamper;
    }

    pub fn take_outgoing(&mut self) -> Vec<Outgoing> {
        mem::take(&mut self.outgoing)
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        mem::take(&mut self.events)
    }

    pub fn take_app_data(&mut self) -> Vec<Vec<u8>> {
        mem::take(&mut self.app_data)
    }

    pub fn take_early_data(&mut self) -> Vec<Vec<u8>> {
        mem::take(&mut self.early_data)
    }

    /// Tickets received from the server.
    pub fn take_tickets(&mut self) -> Vec<ClientTicket> {
        mem::take(&mut self.hs.tickets)
    }

    pub(crate) fn take_issued(&mut self) -> Vec<TicketEntry> {
        mem::take(&mut self.hs.issued)
    }

    pub fn next_timeout(&self) -> Option<u64> {
        if self.phase == Phase::Failed {
            return None;
        }
        match (self.timer.map(|t| t.deadline), self.ack_deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    // ---- event and error plumbing

    pub(crate) fn emit(&mut self, kind: EventKind) {
        self.events.push(Event { t_ms: self.now, conn_id: self.id, kind });
    }

    /// Moves to `Failed`, sends the matching alert, and returns the error.
    pub(crate) fn fail(&mut self, err: Error) -> Error {
        if self.phase == Phase::Failed {
            return err;
        }
        self.failed_in = Some(self.phase);
        self.phase = Phase::Failed;
        self.timer = None;
        self.ack_deadline = None;
        self.sent.clear();
        self.queue.clear();
        if let Some(code) = alert_for(&err) {
            let epoch = self.write_epoch;
            if let Ok((bytes, _)) = self.seal_record(epoch, content_type::ALERT, &[2, code]) {
                self.queue.push(Queued { bytes, part: part("Alert", 2), retransmission: false });
            }
            self.emit(EventKind::Alert { sent: true, description: code });
            self.flush();
        }
        self.error = Some(err.clone());
        err
    }

    fn receive_alert(&mut self, payload: &[u8]) -> Result<(), Error> {
        let code = payload.get(1).copied().unwrap_or(alert::INTERNAL_ERROR);
        self.emit(EventKind::Alert { sent: false, description: code });
        Err(Error::PeerAlert(code))
    }

    // ---- transcript and keys

    pub(crate) fn transcript_add(&mut self, msg: &[u8]) {
        self.key_inputs.transcript.push(msg.to_vec());
        match &mut self.transcript {
            Some(t) => {
                self.counters.hash_blocks += t.alg().blocks_for(msg.len());
                t.update(msg);
            }
            None => self.pre_transcript.extend_from_slice(msg),
        }
    }

    pub(crate) fn transcript_hash(&mut self) -> Result<Vec<u8>, Error> {
        let t = self.transcript.as_ref().ok_or(Error::UnexpectedMessage("transcript hash before suite".into()))?;
        self.counters.hash_blocks += 1;
        Ok(t.current())
    }

    pub(crate) fn schedule(&self) -> Result<&KeySchedule, Error> {
        self.schedule.as_ref().ok_or(Error::UnexpectedMessage("no key schedule".into()))
    }

    pub(crate) fn schedule_mut(&mut self) -> Result<&mut KeySchedule, Error> {
        self.schedule.as_mut().ok_or(Error::UnexpectedMessage("no key schedule".into()))
    }

    fn key_cost(&self) -> u64 {
        match self.cfg.protocol {
            Protocol::Tls => 2,
            Protocol::Dtls => 3,
        }
    }

    pub(crate) fn install_write(&mut self, epoch: u64, secret: &[u8]) -> Result<(), Error> {
        let keys = self.schedule()?.traffic_keys(secret)?;
        self.counters.hkdf_ops += self.key_cost();
        self.write_keys.insert(epoch, keys);
        Ok(())
    }

    pub(crate) fn install_read(&mut self, epoch: u64, secret: &[u8]) -> Result<(), Error> {
        let keys = self.schedule()?.traffic_keys(secret)?;
        self.counters.hkdf_ops += self.key_cost();
        self.read_keys.insert(epoch, ReadState { keys, window: ReplayWindow::new() });
        self.read_generation += 1;
        Ok(())
    }

    pub(crate) fn drop_read(&mut self, epoch: u64) {
        self.read_keys.remove(&epoch);
    }

    pub(crate) fn drop_write(&mut self, epoch: u64) {
        self.write_keys.remove(&epoch);
    }

    // ---- sending

    fn record_opts(&self) -> DtlsRecordOpts {
        DtlsRecordOpts {
            cid: self.cid_peer.clone().filter(|c| !c.is_empty()),
            seq_16bit: self.cfg.dtls.seq_16bit,
            length_present: self.cfg.dtls.length_present || self.cfg.dtls.packing,
            pad_len: self.cfg.pad_len,
        }
    }

    fn dtls_overhead(&self, epoch: u64) -> usize {
        if epoch == 0 {
            return DTLS_PLAINTEXT_HEADER;
        }
        let o = self.record_opts();
        let tag = self.write_keys.get(&epoch).map_or(16, |k| k.suite.tag_len);
        1 + o.cid.map_or(0, |c| c.len())
            + if o.seq_16bit { 2 } else { 1 }
            + if o.length_present { 2 } else { 0 }
            + 1
            + o.pad_len
            + tag
    }

    fn seal_record(&mut self, epoch: u64, ctype: u8, payload: &[u8]) -> Result<(Vec<u8>, RecordNumber), Error> {
        match self.cfg.protocol {
            Protocol::Tls => {
                if epoch == 0 {
                    let bytes = if ctype == content_type::CHANGE_CIPHER_SPEC {
                        ccs_record()
                    } else {
                        plaintext_record(ctype, payload)
                    };
                    return Ok((bytes, RecordNumber { epoch: 0, seq: 0 }));
                }
                let pad = self.cfg.pad_len;
                let keys = self.write_keys.get_mut(&epoch).ok_or(Error::UnknownEpoch(epoch))?;
                let seq = keys.seq();
                let bytes = seal_tls(keys, ctype, payload, pad)?;
                self.counters.aead_seal += 1;
                Ok((bytes, RecordNumber { epoch, seq }))
            }
            Protocol::Dtls => {
                if epoch == 0 {
                    let seq = self.epoch0_seq;
                    self.epoch0_seq += 1;
                    return Ok((dtls_plaintext_record(ctype, 0, seq, payload), RecordNumber { epoch: 0, seq }));
                }
                let opts = self.record_opts();
                let keys = self.write_keys.get_mut(&epoch).ok_or(Error::UnknownEpoch(epoch))?;
                let (bytes, seq) = seal_dtls(keys, epoch, ctype, payload, &opts)?;
                self.counters.aead_seal += 1;
                Ok((bytes, RecordNumber { epoch, seq }))
            }
        }
    }

    /// Starts a new outgoing flight; it implicitly acknowledges the
    /// peer's previous one.
    pub(crate) fn begin_flight(&mut self) {
        self.sent.clear();
        self.timer = None;
        self.flight.clear();
        self.received.clear();
        self.ack_deadline = None;
        self.ack_now = false;
    }

    pub(crate) fn end_flight(&mut self) {
        if self.cfg.protocol == Protocol::Dtls && !self.sent.is_empty() {
            self.timer = Some(RetransmitTimer { deadline: self.now + INITIAL_RTO_MS, rto: INITIAL_RTO_MS, count: 0 });
        }
        let flight = self.flight.join("+");
        self.emit(EventKind::FlightReady { flight });
        self.flush();
    }

    /// Frames, hashes and queues one handshake message.
    pub(crate) fn send_handshake(&mut self, msg: &HandshakeMessage, epoch: u64) -> Result<(), Error> {
        let tls_form = msg.encode_tls();
        if !matches!(msg, HandshakeMessage::NewSessionTicket(_)) {
            self.transcript_add(&tls_form);
        }
        let label = msg.name();
        self.flight.push(label);
        let tamper = self.tamper.filter(|t| t.applies_to(msg));
        if tamper.is_some() {
            self.tamper = None;
        }
        let flip = |wire: &mut Vec<u8>| {
            if let (Some(t), Some(last)) = (tamper, wire.last_mut()) {
                *last ^= 1 << (t.bit % 8);
            }
        };
        match self.cfg.protocol {
            Protocol::Tls => {
                let mut wire = tls_form;
                flip(&mut wire);
                for chunk in wire.chunks(MAX_TLS_FRAGMENT) {
                    let (bytes, _) = self.seal_record(epoch, content_type::HANDSHAKE, chunk)?;
                    self.queue.push(Queued { bytes, part: part(label, chunk.len()), retransmission: false });
                }
            }
            Protocol::Dtls => {
                let message_seq = self.send_msg_seq;
                self.send_msg_seq = self.send_msg_seq.wrapping_add(1);
                let mut wire = encode_handshake(msg, Protocol::Dtls, message_seq);
                flip(&mut wire);
                let budget = self.cfg.dtls.mtu.saturating_sub(self.dtls_overhead(epoch));
                for frag in fragment(&wire, budget)? {
                    let body = frag.encode();
                    let (bytes, rn) = self.seal_record(epoch, content_type::HANDSHAKE, &body)?;
                    self.queue.push(Queued { bytes, part: part(label, body.len()), retransmission: false });
                    self.sent.push(SentFragment { epoch, records: vec![rn], body, label, message_seq, acked: false });
                }
            }
        }
        Ok(())
    }

    /// Compatibility-mode ChangeCipherSpec, at most once.
    pub(crate) fn send_ccs(&mut self) {
        if self.hs.ccs_sent || self.cfg.protocol != Protocol::Tls {
            return;
        }
        self.hs.ccs_sent = true;
        self.queue.push(Queued { bytes: ccs_record(), part: part("ChangeCipherSpec", 1), retransmission: false });
    }

    pub(crate) fn send_data_records(&mut self, epoch: u64, data: &[u8], label: &'static str) -> Result<(), Error> {
        let max = match self.cfg.protocol {
            Protocol::Tls => MAX_TLS_FRAGMENT,
            Protocol::Dtls => self.cfg.dtls.mtu.saturating_sub(self.dtls_overhead(epoch)).max(1),
        };
        let chunks: Vec<&[u8]> = if data.is_empty() { vec![data] } else { data.chunks(max).collect() };
        for chunk in chunks {
            let (bytes, _) = self.seal_record(epoch, content_type::APPLICATION_DATA, chunk)?;
            self.queue.push(Queued { bytes, part: part(label, chunk.len()), retransmission: false });
        }
        Ok(())
    }

    pub fn send_application_data(&mut self, data: &[u8], now: u64) -> Result<(), Error> {
        if self.phase != Phase::Connected {
            return Err(Error::NotReady);
        }
        self.now = now;
        self.send_data_records(EPOCH_APPLICATION, data, "ApplicationData")?;
        self.flush();
        Ok(())
    }

    fn send_ack(&mut self) -> Result<(), Error> {
        self.ack_deadline = None;
        self.ack_now = false;
        if self.received.is_empty() {
            return Ok(());
        }
        let mut records = self.received.clone();
        records.sort_unstable();
        records.dedup();
        let epoch = self.write_epoch;
        let room = (self.cfg.dtls.mtu.saturating_sub(self.dtls_overhead(epoch) + 2) / RecordNumber::WIRE_LEN).max(1);
        if records.len() > room {
            records.drain(..records.len() - room);
        }
        let payload = build_ack(&records).encode();
        let (bytes, _) = self.seal_record(epoch, content_type::ACK, &payload)?;
        self.queue.push(Queued { bytes, part: part("ACK", payload.len()), retransmission: false });
        Ok(())
    }

    pub(crate) fn request_ack(&mut self) {
        self.ack_now = true;
    }

    pub(crate) fn flush_ack(&mut self) -> Result<(), Error> {
        if self.ack_now {
            self.send_ack()?;
        }
        Ok(())
    }

    fn retransmit(&mut self) -> Result<(), Error> {
        let mut sent = mem::take(&mut self.sent);
        for f in sent.iter_mut().filter(|f| !f.acked) {
            let (bytes, rn) = self.seal_record(f.epoch, content_type::HANDSHAKE, &f.body)?;
            f.records.push(rn);
            self.queue.push(Queued { bytes, part: part(f.label, f.body.len()), retransmission: true });
        }
        self.sent = sent;
        Ok(())
    }

    /// Turns queued records into datagrams (DTLS) or one stream write (TLS).
    pub(crate) fn flush(&mut self) {
        let queued = mem::take(&mut self.queue);
        if queued.is_empty() {
            return;
        }
        match self.cfg.protocol {
            Protocol::Tls => {
                let mut out = Outgoing { bytes: Vec::new(), parts: Vec::new(), retransmission: false };
                for q in queued {
                    out.bytes.extend_from_slice(&q.bytes);
                    out.parts.push(q.part);
                }
                self.outgoing.push(out);
            }
            Protocol::Dtls => {
                let mtu = self.cfg.dtls.mtu;
                let mut cur: Option<Outgoing> = None;
                for q in queued {
                    if let Some(c) = cur.as_mut() {
                        if self.cfg.dtls.packing
                            && c.retransmission == q.retransmission
                            && c.bytes.len() + q.bytes.len() <= mtu
                        {
                            c.bytes.extend_from_slice(&q.bytes);
                            c.parts.push(q.part);
                            continue;
                        }
                    }
                    if let Some(c) = cur.take() {
                        self.outgoing.push(c);
                    }
                    cur = Some(Outgoing { bytes: q.bytes, parts: vec![q.part], retransmission: q.retransmission });
                }
                self.outgoing.extend(cur);
            }
        }
    }

    // ---- timers

    pub fn handle_timeout(&mut self, now: u64) -> Result<(), Error> {
        if self.phase == Phase::Failed {
            return Ok(());
        }
        self.now = now;
        if self.ack_deadline.is_some_and(|d| d <= now) {
            self.send_ack().map_err(|e| self.fail(e))?;
        }
        if let Some(mut t) = self.timer.filter(|t| t.deadline <= now) {
            if t.count >= MAX_RETRANSMISSIONS {
                return Err(self.fail(Error::HandshakeTimeout));
            }
            self.retransmit().map_err(|e| self.fail(e))?;
            self.retransmissions += 1;
            t.count += 1;
            self.max_backoffs = self.max_backoffs.max(t.count);
            t.rto *= 2;
            t.deadline = now + t.rto;
            self.timer = Some(t);
        }
        self.flush();
        Ok(())
    }

    // ---- receiving: DTLS

    pub fn handle_datagram(&mut self, datagram: &[u8], now: u64) -> Result<(), Error> {
        if self.phase == Phase::Failed || self.cfg.protocol != Protocol::Dtls {
            return Ok(());
        }
        self.now = now;
        let cid_len = self.cid_local.as_ref().map_or(0, |c| c.len());
        let records = match split_datagram(datagram, cid_len) {
            Ok(slices) => slices.into_iter().map(owned_record).collect::<Vec<_>>(),
            Err(_) => return Ok(()),
        };
        match self.process_records(records) {
            Ok(()) => Ok(()),
            Err(e) => Err(self.fail(e)),
        }
    }

    fn process_records(&mut self, records: Vec<InRecord>) -> Result<(), Error> {
        let mut generation = self.read_generation;
        for rec in records {
            self.process_record(rec)?;
        }
        while generation != self.read_generation && !self.buffered.is_empty() {
            generation = self.read_generation;
            for rec in mem::take(&mut self.buffered) {
                self.process_record(rec)?;
            }
        }
        if self.ack_now {
            self.send_ack()?;
        } else if !self.received.is_empty() && self.ack_deadline.is_none() {
            self.ack_deadline = Some(self.now + INITIAL_RTO_MS / 4);
        }
        self.flush();
        Ok(())
    }

    /// Epochs whose keys this side may still install.
    fn may_install(&self, epoch_low: u8) -> bool {
        match (self.role, self.phase) {
            (Role::Client, Phase::WaitSh) => epoch_low == 2 || epoch_low == 3,
            (Role::Client, Phase::WaitEe | Phase::WaitCertCr | Phase::WaitCv | Phase::WaitFinished) => epoch_low == 3,
            (Role::Server, Phase::WaitClientFlight) => epoch_low == 3,
            _ => false,
        }
    }

    fn process_record(&mut self, rec: InRecord) -> Result<(), Error> {
        match rec {
            InRecord::Plain { content_type: ctype, epoch, seq, payload } => {
                if epoch != 0 {
                    return Ok(());
                }
                match ctype {
                    content_type::HANDSHAKE => self.handshake_payload(&payload, RecordNumber { epoch: 0, seq }),
                    content_type::ALERT => self.receive_alert(&payload),
                    content_type::ACK => {
                        self.process_ack(&payload);
                        Ok(())
                    }
                    _ => Ok(()),
                }
            }
            InRecord::Protected { header, header_bytes, ciphertext } => {
                let Some(epoch) = self.read_keys.keys().rev().copied().find(|e| (e & 3) as u8 == header.epoch_low)
                else {
                    if self.may_install(header.epoch_low) && self.buffered.len() < MAX_BUFFERED_RECORDS {
                        self.buffered.push(InRecord::Protected { header, header_bytes, ciphertext });
                    }
                    return Ok(());
                };
                self.counters.aead_open += 1;
                let st = self.read_keys.get_mut(&epoch).expect("epoch present");
                let Ok(opened) = open_dtls(&st.keys, &mut st.window, &header, &header_bytes, &ciphertext) else {
                    return Ok(());
                };
                self.authenticated += 1;
                let rn = RecordNumber { epoch, seq: opened.seq };
                // application data means the server took our Finished
                if self.role == Role::Client
                    && epoch == EPOCH_APPLICATION
                    && opened.true_type == content_type::APPLICATION_DATA
                {
                    self.clear_sent();
                }
                match opened.true_type {
                    content_type::HANDSHAKE => self.handshake_payload(&opened.payload, rn),
                    content_type::ACK => {
                        self.process_ack(&opened.payload);
                        Ok(())
                    }
                    content_type::APPLICATION_DATA => {
                        self.deliver_data(epoch, opened.payload);
                        Ok(())
                    }
                    content_type::ALERT => self.receive_alert(&opened.payload),
                    _ => Ok(()),
                }
            }
        }
    }

    fn deliver_data(&mut self, epoch: u64, payload: Vec<u8>) {
        match (self.role, epoch) {
            (Role::Server, EPOCH_EARLY) => {
                self.emit(EventKind::EarlyData { len: payload.len(), replay_uncertain: true });
                self.early_data.push(payload);
            }
            (_, EPOCH_APPLICATION) => {
                self.emit(EventKind::AppData { len: payload.len() });
                self.app_data.push(payload);
            }
            _ => {}
        }
    }

    fn clear_sent(&mut self) {
        self.sent.clear();
        self.timer = None;
    }

    fn process_ack(&mut self, payload: &[u8]) {
        let Ok(ack) = Ack::decode(payload) else {
            return;
        };
        for f in self.sent.iter_mut() {
            if f.records.iter().any(|r| ack.records.contains(r)) {
                f.acked = true;
            }
        }
        if self.sent.iter().all(|f| f.acked) {
            self.clear_sent();
        }
    }

    fn handshake_payload(&mut self, payload: &[u8], rn: RecordNumber) -> Result<(), Error> {
        let mut r = Reader::new(payload);
        let mut frags = Vec::new();
        while !r.is_empty() {
            match DtlsFragment::decode(&mut r) {
                Ok(f) => frags.push(f),
                Err(_) => return Ok(()),
            }
        }
        for f in frags {
            self.handle_fragment(f, rn)?;
        }
        Ok(())
    }

    fn handle_fragment(&mut self, frag: DtlsFragment, rn: RecordNumber) -> Result<(), Error> {
        if frag.message_seq < self.recv_msg_seq {
            // retransmission of something already processed
            if self.phase == Phase::Connected || rn.epoch > 0 {
                self.received.push(rn);
                self.ack_now = true;
            }
            return Ok(());
        }
        if frag.message_seq > self.recv_msg_seq.saturating_add(16) {
            return Ok(());
        }
        self.received.push(rn);
        let entry = self.reassembly.entry(frag.message_seq).or_insert_with(|| Reassembly::new(&frag));
        if entry.insert(&frag).is_err() {
            return Ok(());
        }
        // any part of the peer's next flight acknowledges ours
        self.clear_sent();
        while self.reassembly.get(&self.recv_msg_seq).is_some_and(|r| r.is_complete()) {
            let r = self.reassembly.remove(&self.recv_msg_seq).expect("present");
            self.recv_msg_seq = self.recv_msg_seq.wrapping_add(1);
            let bytes = r.finish()?;
            self.process_dtls_message(&bytes)?;
            if self.phase == Phase::Failed {
                return Ok(());
            }
        }
        if self.reassembly.keys().any(|&s| s > self.recv_msg_seq) {
            self.ack_now = true;
        }
        Ok(())
    }

    fn process_dtls_message(&mut self, bytes: &[u8]) -> Result<(), Error> {
        let (msg, _) = decode_handshake(bytes, Protocol::Dtls)?;
        let tls_form = dtls_to_tls_form(bytes)?;
        self.process_message(msg, &tls_form)
    }

    fn process_message(&mut self, msg: HandshakeMessage, tls_form: &[u8]) -> Result<(), Error> {
        match self.role {
            Role::Client => self.client_message(msg, tls_form),
            Role::Server => self.server_message(msg, tls_form),
        }
    }

    // ---- receiving: TLS

    pub fn handle_stream(&mut self, bytes: &[u8], now: u64) -> Result<(), Error> {
        if self.phase == Phase::Failed || self.cfg.protocol != Protocol::Tls {
            return Ok(());
        }
        self.now = now;
        self.stream_buf.extend_from_slice(bytes);
        match self.drain_stream() {
            Ok(()) => {
                self.flush();
                Ok(())
            }
            Err(e) => Err(self.fail(e)),
        }
    }

    fn drain_stream(&mut self) -> Result<(), Error> {
        let (records, used) = split_stream(&self.stream_buf)?;
        self.stream_buf.drain(..used);
        for rec in records {
            self.process_tls_record(rec)?;
            if self.phase == Phase::Failed {
                break;
            }
        }
        Ok(())
    }

    fn process_tls_record(&mut self, rec: TlsRecord) -> Result<(), Error> {
        match rec.outer_type {
            content_type::CHANGE_CIPHER_SPEC if rec.fragment == [1] => Ok(()),
            content_type::ALERT if self.tls_read_epoch == 0 => self.receive_alert(&rec.fragment),
            content_type::HANDSHAKE if self.tls_read_epoch == 0 => self.tls_handshake_bytes(&rec.fragment),
            content_type::APPLICATION_DATA if self.tls_read_epoch > 0 => {
                let epoch = self.tls_read_epoch;
                self.counters.aead_open += 1;
                let st = self.read_keys.get_mut(&epoch).ok_or(Error::UnknownEpoch(epoch))?;
                let (ctype, payload) = match open_tls(&mut st.keys, &rec.encode()) {
                    Ok(v) => v,
                    Err(_) if self.hs.skip_early => return Ok(()),
                    Err(_) => return Err(Error::DecryptFailure),
                };
                self.hs.skip_early = false;
                self.authenticated += 1;
                match ctype {
                    content_type::HANDSHAKE => self.tls_handshake_bytes(&payload),
                    content_type::APPLICATION_DATA if epoch != EPOCH_HANDSHAKE => {
                        self.deliver_data(epoch, payload);
                        Ok(())
                    }
                    content_type::ALERT => self.receive_alert(&payload),
                    t => Err(Error::UnexpectedMessage(format!("inner content type {t} in epoch {epoch}"))),
                }
            }
            t => Err(Error::UnexpectedMessage(format!("record type {t} in epoch {}", self.tls_read_epoch))),
        }
    }

    fn tls_handshake_bytes(&mut self, bytes: &[u8]) -> Result<(), Error> {
        self.hs_buf.extend_from_slice(bytes);
        while self.hs_buf.len() >= 4 {
            let len = u32::from_be_bytes([0, self.hs_buf[1], self.hs_buf[2], self.hs_buf[3]]) as usize;
            if self.hs_buf.len() < 4 + len {
                break;
            }
            let msg_bytes: Vec<u8> = self.hs_buf.drain(..4 + len).collect();
            let (msg, _) = decode_handshake(&msg_bytes, Protocol::Tls)?;
            self.process_message(msg, &msg_bytes)?;
            if self.phase == Phase::Failed {
                break;
            }
        }
        Ok(())
    }
}

fn part(label: &str, len: usize) -> WirePart {
    WirePart { label: label.to_string(), len }
}

fn owned_record(slice: DtlsRecordSlice<'_>) -> InRecord {
    match slice {
        DtlsRecordSlice::Plaintext { content_type, epoch, seq, payload, .. } => {
            InRecord::Plain { content_type, epoch, seq, payload: payload.to_vec() }
        }
        DtlsRecordSlice::Ciphertext { header, header_bytes, ciphertext, .. } => {
            InRecord::Protected { header, header_bytes: header_bytes.to_vec(), ciphertext: ciphertext.to_vec() }
        }
    }
}

pub(crate) fn alert_for(err: &Error) -> Option<u8> {
    Some(match err {
        Error::PeerAlert(_) | Error::HandshakeTimeout => return None,
        Error::BadFinished | Error::BadBinder | Error::BadSignature => alert::DECRYPT_ERROR,
        Error::DecryptFailure | Error::AuthenticationFailure => alert::BAD_RECORD_MAC,
        Error::Decode(DecodeError::InvalidValue("certificate")) => alert::BAD_CERTIFICATE,
        Error::Decode(_) => alert::DECODE_ERROR,
        Error::UnexpectedMessage(_) => alert::UNEXPECTED_MESSAGE,
        Error::IllegalParameter(_) | Error::BadCookie => alert::ILLEGAL_PARAMETER,
        Error::NoCommonSuite
        | Error::NoCommonGroup
        | Error::MissingCredential
        | Error::ExpiredTicket
        | Error::UnknownTicket => alert::HANDSHAKE_FAILURE,
        _ => alert::INTERNAL_ERROR,
    })
}
