use std::collections::{BTreeMap, HashMap};
use std::mem;

use rand::{RngCore, SeedableRng};

use crate::codec::Reader;
use crate::crypto::{NamedGroup, SuiteId};
use crate::error::Error;
use crate::key_schedule::PskKind;
use crate::messages::{
    build_hello_retry_request, decode_handshake, dtls_to_tls_form, encode_handshake, ext_type, find_ext, ClientHello,
    DtlsFragment, Extension, HandshakeMessage, HandshakeType, Reassembly,
};
use crate::record::{
    ccs_record, content_type, dtls_plaintext_record, plaintext_record, split_datagram, split_stream, DtlsRecordSlice,
};
use crate::sim_net::Addr;
use crate::{Protocol, SimRng};

use super::config::Config;
use super::connection::{Connection, Tamper};
use super::cookie::CookieSecret;
use super::server::{plan_handshake, ResolvedPsk, RetryContext};
use super::{Event, EventKind, Outgoing, Phase, WirePart, TICKET_AGE_TOLERANCE_MS};

/// Server-side record of an issued ticket.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TicketEntry {
    pub ticket: Vec<u8>,
    pub psk: Vec<u8>,
    pub suite: SuiteId,
    pub issued_at_ms: u64,
    pub lifetime_s: u32,
    pub age_add: u32,
    pub max_early_data: u32,
}

/// Accepts handshakes from many peers and demultiplexes their traffic by
/// source address or connection ID.
pub struct Listener {
    cfg: Config,
    rng: SimRng,
    cookie: CookieSecret,
    tickets: HashMap<Vec<u8>, TicketEntry>,
    conns: BTreeMap<u64, Connection>,
    by_addr: HashMap<Addr, u64>,
    by_cid: HashMap<Vec<u8>, u64>,
    addr_of: HashMap<u64, Addr>,
    next_id: u64,
    pending_hello: HashMap<Addr, Reassembly>,
    streams: HashMap<Addr, Vec<u8>>,
    outgoing: Vec<(Addr, Outgoing)>,
    events: Vec<Event>,
    tamper: Option<Tamper>,
    hello_retries: u64,
    dropped: u64,
    now: u64,
}

impl std::fmt::Debug for Listener {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Listener")
            .field("protocol", &self.cfg.protocol)
            .field("connections", &self.conns.len())
            .finish_non_exhaustive()
    }
}

impl Listener {
    pub fn new(cfg: Config, mut rng: SimRng) -> Result<Self, Error> {
        cfg.validate()?;
        if cfg.mode.uses_certificates() && cfg.certificate.is_none() {
            return Err(Error::MissingCredential);
        }
        let cookie = CookieSecret::generate(&mut rng);
        Ok(Listener {
            cfg,
            rng,
            cookie,
            tickets: HashMap::new(),
            conns: BTreeMap::new(),
            by_addr: HashMap::new(),
            by_cid: HashMap::new(),
            addr_of: HashMap::new(),
            next_id: 1,
            pending_hello: HashMap::new(),
            streams: HashMap::new(),
            outgoing: Vec::new(),
            events: Vec::new(),
            tamper: None,
            hello_retries: 0,
            dropped: 0,
            now: 0,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    /// Applied to every connection accepted afterwards.
    pub fn set_tamper(&mut self, tamper: Option<Tamper>) {
        self.tamper = tamper;
    }

    pub fn rotate_cookie_secret(&mut self) {
        self.cookie.rotate(&mut self.rng);
    }

    pub fn insert_ticket(&mut self, t: TicketEntry) {
        self.tickets.insert(t.ticket.clone(), t);
    }

    pub fn tickets(&self) -> impl Iterator<Item = &TicketEntry> {
        self.tickets.values()
    }

    pub fn connection(&self, id: u64) -> Option<&Connection> {
        self.conns.get(&id)
    }

    pub fn connection_mut(&mut self, id: u64) -> Option<&mut Connection> {
        self.conns.get_mut(&id)
    }

    pub fn connections(&self) -> impl Iterator<Item = &Connection> {
        self.conns.values()
    }

    pub fn connection_for(&self, addr: Addr) -> Option<&Connection> {
        self.by_addr.get(&addr).and_then(|id| self.conns.get(id))
    }

    pub fn address_of(&self, id: u64) -> Option<Addr> {
        self.addr_of.get(&id).copied()
    }

    /// Stateless HelloRetryRequests sent.
    pub fn hello_retry_requests(&self) -> u64 {
        self.hello_retries
    }

    /// Datagrams discarded before reaching a connection.
    pub fn dropped_datagrams(&self) -> u64 {
        self.dropped
    }

    /// Forgets the address binding, e.g. when a stream closes.
    pub fn disconnect(&mut self, addr: Addr) {
        self.by_addr.remove(&addr);
        self.streams.remove(&addr);
        self.pending_hello.remove(&addr);
    }

    pub fn take_outgoing(&mut self) -> Vec<(Addr, Outgoing)> {
        mem::take(&mut self.outgoing)
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        mem::take(&mut self.events)
    }

    pub fn next_timeout(&self) -> Option<u64> {
        self.conns.values().filter_map(|c| c.next_timeout()).min()
    }

    pub fn handle_timeout(&mut self, now: u64) -> Result<(), Error> {
        self.now = now;
        let ids: Vec<u64> = self.conns.keys().copied().collect();
        let mut first_err = None;
        for id in ids {
            let r = self.conns.get_mut(&id).expect("listed").handle_timeout(now);
            self.collect(id);
            if let Err(e) = r {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    pub fn send_application_data(&mut self, id: u64, data: &[u8], now: u64) -> Result<(), Error> {
        let conn = self.conns.get_mut(&id).ok_or(Error::NotReady)?;
        let r = conn.send_application_data(data, now);
        self.collect(id);
        r
    }

    /// Moves a connection's output, events and tickets into the listener.
    fn collect(&mut self, id: u64) {
        let Some(conn) = self.conns.get_mut(&id) else {
            return;
        };
        let addr = self.addr_of[&id];
        self.outgoing.extend(conn.take_outgoing().into_iter().map(|o| (addr, o)));
        self.events.extend(conn.take_events());
        for t in conn.take_issued() {
            self.tickets.insert(t.ticket.clone(), t);
        }
        if let Some(cid) = conn.local_cid().filter(|c| !c.is_empty()) {
            self.by_cid.entry(cid.to_vec()).or_insert(id);
        }
    }

    fn resolve_psk(&self, ch: &ClientHello, now: u64) -> (Option<ResolvedPsk>, Option<Error>) {
        let Some(Extension::PreSharedKeyOffer(offer)) = find_ext(&ch.extensions, ext_type::PRE_SHARED_KEY) else {
            return (None, None);
        };
        let Some(id) = offer.identities.first() else {
            return (None, None);
        };
        if let Some(p) = self.cfg.server_psks.iter().find(|p| p.identity == id.identity) {
            let psk = ResolvedPsk { secret: p.secret.clone(), kind: PskKind::External, suite: p.suite, early_ok: true };
            return (Some(psk), None);
        }
        let Some(t) = self.tickets.get(&id.identity) else {
            return (None, Some(Error::UnknownTicket));
        };
        let age_ms = now.saturating_sub(t.issued_at_ms);
        if age_ms > t.lifetime_s as u64 * 1000 {
            return (None, Some(Error::ExpiredTicket));
        }
        let client_age = id.obfuscated_ticket_age.wrapping_sub(t.age_add) as u64;
        let early_ok = client_age.abs_diff(age_ms) <= TICKET_AGE_TOLERANCE_MS && t.max_early_data > 0;
        let psk = ResolvedPsk { secret: t.psk.clone(), kind: PskKind::Resumption, suite: t.suite, early_ok };
        (Some(psk), None)
    }

    // ---- DTLS

    /// Feeds one datagram from `from`. Returns the connection it reached.
    pub fn handle_datagram(&mut self, from: Addr, datagram: &[u8], now: u64) -> Result<Option<u64>, Error> {
        self.now = now;
        let Some(&first) = datagram.first() else {
            return Ok(None);
        };
        if let Some(len) = self.cfg.cid_len.filter(|&l| l > 0) {
            if first & 0xe0 == 0x20 && first & 0x10 != 0 {
                let Some(cid) = datagram.get(1..1 + len) else {
                    self.dropped += 1;
                    return Ok(None);
                };
                return match self.by_cid.get(cid).copied() {
                    Some(id) => self.deliver(id, from, datagram, now),
                    None => {
                        self.dropped += 1;
                        Ok(None)
                    }
                };
            }
        }
        let known = self.by_addr.get(&from).copied();
        let fresh_hello = first == content_type::HANDSHAKE
            && known.is_some_and(|id| matches!(self.conns[&id].phase(), Phase::Connected | Phase::Failed));
        match known {
            Some(id) if !fresh_hello => self.deliver(id, from, datagram, now),
            _ => self.new_dtls_peer(from, datagram, now),
        }
    }

    fn deliver(&mut self, id: u64, from: Addr, datagram: &[u8], now: u64) -> Result<Option<u64>, Error> {
        let conn = self.conns.get_mut(&id).expect("mapped id");
        let before = conn.authenticated_records();
        let r = conn.handle_datagram(datagram, now);
        let authenticated = conn.authenticated_records() > before;
        let old = self.addr_of[&id];
        if old != from {
            if authenticated && conn.local_cid().is_some_and(|c| !c.is_empty()) {
                self.by_addr.remove(&old);
                self.by_addr.insert(from, id);
                self.addr_of.insert(id, from);
                self.events.push(Event {
                    t_ms: now,
                    conn_id: id,
                    kind: EventKind::AddressMigrated { from: old, to: from },
                });
            } else if !authenticated {
                self.dropped += 1;
            }
        }
        self.collect(id);
        r.map(|_| Some(id))
    }

    fn new_dtls_peer(&mut self, from: Addr, datagram: &[u8], now: u64) -> Result<Option<u64>, Error> {
        let Ok(slices) = split_datagram(datagram, 0) else {
            self.dropped += 1;
            return Ok(None);
        };
        let more_records = slices.len() > 1;
        for slice in slices {
            let DtlsRecordSlice::Plaintext { content_type: content_type::HANDSHAKE, epoch: 0, seq, payload, .. } =
                slice
            else {
                continue;
            };
            let mut r = Reader::new(payload);
            while !r.is_empty() {
                let Ok(frag) = DtlsFragment::decode(&mut r) else {
                    break;
                };
                if frag.msg_type != HandshakeType::ClientHello.code() {
                    continue;
                }
                let entry = self.pending_hello.entry(from).or_insert_with(|| Reassembly::new(&frag));
                if entry.message_seq() != frag.message_seq {
                    *entry = Reassembly::new(&frag);
                }
                if entry.insert(&frag).is_err() || !entry.is_complete() {
                    continue;
                }
                let bytes = self.pending_hello.remove(&from).expect("present").finish()?;
                let Ok((HandshakeMessage::ClientHello(ch), Some(msg_seq))) = decode_handshake(&bytes, Protocol::Dtls)
                else {
                    self.dropped += 1;
                    return Ok(None);
                };
                let tls_form = dtls_to_tls_form(&bytes)?;
                let accepted = self.on_client_hello(from, ch, &tls_form, msg_seq, seq, now)?;
                if let (Some(id), true) = (accepted, more_records) {
                    // early data packed behind the ClientHello
                    let r = self.conns.get_mut(&id).expect("accepted").handle_datagram(datagram, now);
                    self.collect(id);
                    r?;
                }
                return Ok(accepted);
            }
        }
        if !self.pending_hello.contains_key(&from) {
            self.dropped += 1;
        }
        Ok(None)
    }

    // ---- TLS

    /// Feeds stream bytes received from `from`.
    pub fn handle_stream(&mut self, from: Addr, bytes: &[u8], now: u64) -> Result<Option<u64>, Error> {
        self.now = now;
        if let Some(&id) = self.by_addr.get(&from) {
            let r = self.conns.get_mut(&id).expect("mapped id").handle_stream(bytes, now);
            self.collect(id);
            return r.map(|_| Some(id));
        }
        let buf = self.streams.entry(from).or_default();
        buf.extend_from_slice(bytes);
        let (records, _) = split_stream(buf)?;
        let mut consumed = 0;
        let mut hs = Vec::new();
        for rec in records {
            consumed += rec.wire_len();
            match rec.outer_type {
                content_type::HANDSHAKE => hs.extend_from_slice(&rec.fragment),
                // compat CCS, or 0-RTT data aimed at a retried hello
                content_type::CHANGE_CIPHER_SPEC | content_type::APPLICATION_DATA => {
                    if hs.is_empty() {
                        buf.drain(..consumed);
                        consumed = 0;
                    }
                    continue;
                }
                t => return Err(Error::UnexpectedMessage(format!("record type {t} before ClientHello"))),
            }
            if hs.len() < 4 {
                continue;
            }
            let len = u32::from_be_bytes([0, hs[1], hs[2], hs[3]]) as usize;
            if hs.len() < 4 + len {
                continue;
            }
            if hs.len() > 4 + len {
                return Err(Error::UnexpectedMessage("data after ClientHello".into()));
            }
            let rest = buf.split_off(consumed);
            self.streams.remove(&from);
            let Ok((HandshakeMessage::ClientHello(ch), _)) = decode_handshake(&hs, Protocol::Tls) else {
                return Err(Error::UnexpectedMessage("first message is not a ClientHello".into()));
            };
            let accepted = self.on_client_hello(from, ch, &hs, 0, 0, now)?;
            match accepted {
                Some(id) if !rest.is_empty() => {
                    let r = self.conns.get_mut(&id).expect("accepted").handle_stream(&rest, now);
                    self.collect(id);
                    r?;
                }
                Some(_) => {}
                None => {
                    self.streams.insert(from, rest);
                }
            }
            return Ok(accepted);
        }
        Ok(None)
    }

    // ---- shared ClientHello path

    fn on_client_hello(
        &mut self,
        from: Addr,
        ch: ClientHello,
        ch_tls_form: &[u8],
        msg_seq: u16,
        record_seq: u64,
        now: u64,
    ) -> Result<Option<u64>, Error> {
        let protocol = self.cfg.protocol;
        let (psk, psk_error) = self.resolve_psk(&ch, now);
        let plan = plan_handshake(&self.cfg, &ch, psk.as_ref());
        let retry = match find_ext(&ch.extensions, ext_type::COOKIE) {
            Some(Extension::Cookie(c)) => {
                let Some(contents) = self.cookie.verify(from, c) else {
                    self.dropped += 1;
                    return match protocol {
                        Protocol::Dtls => Ok(None),
                        Protocol::Tls => Err(Error::BadCookie),
                    };
                };
                let suite = plan.as_ref().map_or(self.cfg.suites[0], |p| p.suite);
                let hrr = build_hello_retry_request(protocol, &ch.session_id, suite, contents.group, Some(c.clone()));
                Some(RetryContext {
                    client_hello_hash: contents.client_hello_hash,
                    hello_retry_request: HandshakeMessage::ServerHello(hrr).encode_tls(),
                    ccs_sent: protocol == Protocol::Tls && !ch.session_id.is_empty(),
                })
            }
            _ => {
                if let Ok(p) = &plan {
                    let need_cookie = protocol == Protocol::Dtls && self.cfg.dos_protection;
                    if p.needs_key_share() || need_cookie {
                        let group = p.needs_key_share().then_some(p.group).flatten();
                        self.send_hello_retry(from, &ch, ch_tls_form, p.suite, group, msg_seq, record_seq, now)?;
                        return Ok(None);
                    }
                }
                None
            }
        };

        let id = self.next_id;
        self.next_id += 1;
        let rng = SimRng::seed_from_u64(self.rng.next_u64());
        let mut conn = Connection::server(self.cfg.clone(), rng, id);
        conn.set_tamper(self.tamper);
        let r = conn.server_accept(now, ch, ch_tls_form, msg_seq, psk, psk_error, retry);
        self.conns.insert(id, conn);
        if let Some(old) = self.by_addr.insert(from, id) {
            self.addr_of.retain(|&k, _| k != old || self.conns.contains_key(&k));
        }
        self.addr_of.insert(id, from);
        self.collect(id);
        r.map(|_| Some(id))
    }

    #[allow(clippy::too_many_arguments)]
    fn send_hello_retry(
        &mut self,
        to: Addr,
        ch: &ClientHello,
        ch_tls_form: &[u8],
        suite: SuiteId,
        group: Option<NamedGroup>,
        msg_seq: u16,
        record_seq: u64,
        now: u64,
    ) -> Result<(), Error> {
        let hash = suite.params()?.hash_alg;
        let cookie = self.cookie.mint(to, group, &hash.hash(ch_tls_form));
        let hrr = HandshakeMessage::ServerHello(build_hello_retry_request(
            self.cfg.protocol,
            &ch.session_id,
            suite,
            group,
            Some(cookie),
        ));
        let label = hrr.name().to_string();
        let out = match self.cfg.protocol {
            Protocol::Dtls => {
                let body = encode_handshake(&hrr, Protocol::Dtls, msg_seq);
                Outgoing {
                    bytes: dtls_plaintext_record(content_type::HANDSHAKE, 0, record_seq, &body),
                    parts: vec![WirePart { label, len: body.len() }],
                    retransmission: false,
                }
            }
            Protocol::Tls => {
                let body = hrr.encode_tls();
                let mut bytes = plaintext_record(content_type::HANDSHAKE, &body);
                let mut parts = vec![WirePart { label, len: body.len() }];
                if !ch.session_id.is_empty() {
                    bytes.extend_from_slice(&ccs_record());
                    parts.push(WirePart { label: "ChangeCipherSpec".into(), len: 1 });
                }
                Outgoing { bytes, parts, retransmission: false }
            }
        };
        self.outgoing.push((to, out));
        self.hello_retries += 1;
        self.events.push(Event {
            t_ms: now,
            conn_id: 0,
            kind: EventKind::FlightReady { flight: "HelloRetryRequest".into() },
        });
        Ok(())
    }
}
