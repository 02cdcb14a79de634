//! Deterministic in-memory transports.
//!
//! Two endpoints share a [`Link`]: a reliable ordered stream (TLS) or a
//! lossy, duplicating, reordering, MTU-bounded datagram channel (DTLS).
//! Every random decision comes from one seeded ChaCha stream, and time is
//! an integer millisecond clock owned by the caller.

use std::fmt;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Addr(pub u32);

impl Addr {
    pub fn to_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.to_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Client,
    Server,
}

impl Endpoint {
    pub fn peer(self) -> Endpoint {
        match self {
            Endpoint::Client => Endpoint::Server,
            Endpoint::Server => Endpoint::Client,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    C2s,
    S2c,
}

impl Direction {
    pub fn from_sender(e: Endpoint) -> Self {
        match e {
            Endpoint::Client => Direction::C2s,
            Endpoint::Server => Direction::S2c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Stream,
    Datagram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub loss_rate: f64,
    pub dup_rate: f64,
    pub reorder_rate: f64,
    pub latency_ms: u64,
    pub mtu: usize,
    pub seed: u64,
    /// Constant per-datagram encapsulation bytes, reported separately.
    pub framing_overhead: usize,
    pub trace: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            loss_rate: 0.0,
            dup_rate: 0.0,
            reorder_rate: 0.0,
            latency_ms: 10,
            mtu: 1280,
            seed: 1,
            framing_overhead: 0,
            trace: false,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, p) in [("loss", self.loss_rate), ("dup", self.dup_rate), ("reorder", self.reorder_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} rate {p} outside [0, 1]")));
            }
        }
        if self.mtu == 0 {
            return Err(Error::Config("mtu must be positive".into()));
        }
        Ok(())
    }
}

/// Accounting label for a slice of an outgoing datagram.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePart {
    pub label: String,
    /// Content bytes, excluding record header, inner type and tag.
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageBytes {
    pub name: String,
    pub direction: Direction,
    pub bytes: usize,
    pub retransmission: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireStats {
    pub bytes_c2s: usize,
    pub bytes_s2c: usize,
    pub datagrams_c2s: usize,
    pub datagrams_s2c: usize,
    /// framing_overhead × datagrams, not included in the byte counters.
    pub framing_bytes: usize,
    pub retransmitted_bytes: usize,
    /// Record headers, inner content types and AEAD tags.
    pub record_overhead: usize,
    pub per_message: Vec<MessageBytes>,
}

impl WireStats {
    pub fn total(&self) -> usize {
        self.bytes_c2s + self.bytes_s2c
    }

    pub fn datagrams(&self) -> usize {
        self.datagrams_c2s + self.datagrams_s2c
    }

    pub fn framed_total(&self) -> usize {
        self.total() + self.framing_bytes
    }

    /// True when per-message bytes plus record overhead equal the total.
    pub fn closes(&self) -> bool {
        self.per_message.iter().map(|m| m.bytes).sum::<usize>() + self.record_overhead == self.total()
    }

    fn count(&mut self, from: Endpoint, bytes: usize, parts: &[WirePart], retransmission: bool, framing: usize) {
        let dir = Direction::from_sender(from);
        match dir {
            Direction::C2s => {
                self.bytes_c2s += bytes;
                self.datagrams_c2s += 1;
            }
            Direction::S2c => {
                self.bytes_s2c += bytes;
                self.datagrams_s2c += 1;
            }
        }
        self.framing_bytes += framing;
        if retransmission {
            self.retransmitted_bytes += bytes;
        }
        let content: usize = parts.iter().map(|p| p.len).sum();
        self.record_overhead += bytes - content;
        for p in parts {
            self.per_message.push(MessageBytes { name: p.label.clone(), direction: dir, bytes: p.len, retransmission });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub to: Endpoint,
    pub from_addr: Addr,
    pub bytes: Vec<u8>,
    pub at_ms: u64,
}

#[derive(Clone, Debug)]
struct InFlight {
    at_ms: u64,
    order: u64,
    delivery: Delivery,
}

pub struct Link {
    kind: LinkKind,
    cfg: NetConfig,
    rng: SimRng,
    addrs: [Addr; 2],
    queue: Vec<InFlight>,
    /// Latest scheduled delivery per receiving endpoint, to keep streams ordered.
    stream_tail: [u64; 2],
    order: u64,
    stats: WireStats,
    started: bool,
    closed: bool,
    trace: Vec<String>,
    sent: [usize; 2],
    scripted_drops: Vec<(Endpoint, usize)>,
}

impl Link {
    pub fn new(kind: LinkKind, cfg: NetConfig) -> Result<Self, Error> {
        cfg.validate()?;
        Ok(Link {
            kind,
            rng: SimRng::seed_from_u64(cfg.seed),
            cfg,
            addrs: [Addr(0x0a00_0001), Addr(0x0a00_0002)],
            queue: Vec::new(),
            stream_tail: [0; 2],
            order: 0,
            stats: WireStats::default(),
            started: false,
            closed: false,
            trace: Vec::new(),
            sent: [0; 2],
            scripted_drops: Vec::new(),
        })
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn address(&self, e: Endpoint) -> Addr {
        self.addrs[e.index()]
    }

    /// Subsequent sends from `e` carry `addr` as their source.
    pub fn rebind(&mut self, e: Endpoint, addr: Addr, now: u64) {
        if self.addrs[e.index()] != addr {
            if self.cfg.trace {
                self.trace.push(format!("{now} rebind {e:?} {} -> {addr}", self.addrs[e.index()]));
            }
            self.addrs[e.index()] = addr;
        }
    }

    /// Drops the `index`-th (0-based) datagram sent by `from`, in addition to random loss.
    pub fn script_drop(&mut self, from: Endpoint, index: usize) {
        self.scripted_drops.push((from, index));
    }

    fn push(&mut self, to: Endpoint, from_addr: Addr, bytes: Vec<u8>, at_ms: u64) {
        self.order += 1;
        self.queue.push(InFlight { at_ms, order: self.order, delivery: Delivery { to, from_addr, bytes, at_ms } });
    }

    pub fn send(
        &mut self,
        from: Endpoint,
        bytes: &[u8],
        parts: &[WirePart],
        retransmission: bool,
        now: u64,
    ) -> Result<(), Error> {
        if self.kind == LinkKind::Datagram && bytes.len() > self.cfg.mtu {
            return Err(Error::OversizedDatagram { len: bytes.len(), mtu: self.cfg.mtu });
        }
        self.started = true;
        let to = from.peer();
        let src = self.addrs[from.index()];
        let dir = Direction::from_sender(from);
        match self.kind {
            LinkKind::Stream => {
                if !self.closed {
                    self.stats.count(from, bytes.len(), parts, retransmission, self.cfg.framing_overhead);
                }
                // in order, lossless, split into 1..=3 arbitrary chunks
                let at = (now + self.cfg.latency_ms).max(self.stream_tail[to.index()]);
                self.stream_tail[to.index()] = at;
                let pieces = if bytes.len() > 1 { self.rng.gen_range(1..=3usize.min(bytes.len())) } else { 1 };
                let mut cuts: Vec<usize> = (1..pieces).map(|_| self.rng.gen_range(1..bytes.len())).collect();
                cuts.sort_unstable();
                cuts.dedup();
                let mut start = 0;
                for c in cuts.into_iter().chain(std::iter::once(bytes.len())) {
                    self.push(to, src, bytes[start..c].to_vec(), at);
                    start = c;
                }
                if self.cfg.trace {
                    self.trace.push(format!("{now} {dir:?} len={} deliver@{at}", bytes.len()));
                }
            }
            LinkKind::Datagram => {
                if !self.closed {
                    self.stats.count(from, bytes.len(), parts, retransmission, self.cfg.framing_overhead);
                }
                let index = self.sent[from.index()];
                self.sent[from.index()] += 1;
                let scripted = self.scripted_drops.contains(&(from, index));
                let lost = self.rng.gen_bool(self.cfg.loss_rate) || scripted;
                let dup = self.rng.gen_bool(self.cfg.dup_rate);
                let reorder = self.rng.gen_bool(self.cfg.reorder_rate);
                let extra = self.rng.gen_range(1..=2 * self.cfg.latency_ms.max(1));
                if lost {
                    if self.cfg.trace {
                        self.trace.push(format!("{now} {dir:?} len={} drop", bytes.len()));
                    }
                    return Ok(());
                }
                let at = now + self.cfg.latency_ms + if reorder { extra } else { 0 };
                self.push(to, src, bytes.to_vec(), at);
                if dup {
                    if !self.closed {
                        self.stats.count(from, bytes.len(), parts, retransmission, self.cfg.framing_overhead);
                    }
                    self.push(to, src, bytes.to_vec(), at + 1);
                }
                if self.cfg.trace {
                    let mut line = format!("{now} {dir:?} len={} deliver@{at}", bytes.len());
                    if reorder {
                        line.push_str(" reorder");
                    }
                    if dup {
                        line.push_str(" dup");
                    }
                    self.trace.push(line);
                }
            }
        }
        Ok(())
    }

    /// Removes and returns every delivery due at or before `now`.
    pub fn poll(&mut self, now: u64) -> Vec<Delivery> {
        self.queue.sort_by_key(|f| (f.at_ms, f.order));
        let due = self.queue.iter().take_while(|f| f.at_ms <= now).count();
        self.queue.drain(..due).map(|f| f.delivery).collect()
    }

    pub fn next_delivery(&self) -> Option<u64> {
        self.queue.iter().map(|f| f.at_ms).min()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Stops counting; later traffic is still delivered.
    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn stats(&self) -> WireStats {
        self.stats.clone()
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(n: usize) -> Vec<WirePart> {
        vec![WirePart { label: "x".into(), len: n }]
    }

    #[test]
    fn identity_channel() {
        let mut l = Link::new(LinkKind::Datagram, NetConfig::default()).unwrap();
        for i in 0..10u8 {
            l.send(Endpoint::Client, &[i], &part(1), false, i as u64).unwrap();
        }
        let got: Vec<u8> = l.poll(1000).into_iter().map(|d| d.bytes[0]).collect();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn total_loss() {
        let cfg = NetConfig { loss_rate: 1.0, ..Default::default() };
        let mut l = Link::new(LinkKind::Datagram, cfg).unwrap();
        for _ in 0..10 {
            l.send(Endpoint::Client, &[1], &part(1), false, 0).unwrap();
        }
        assert!(l.poll(u64::MAX).is_empty());
        assert_eq!(l.stats().datagrams_c2s, 10);
    }

    #[test]
    fn seeded_drop_pattern_reproducible() {
        let run = || {
            let cfg = NetConfig { loss_rate: 0.2, seed: 42, ..Default::default() };
            let mut l = Link::new(LinkKind::Datagram, cfg).unwrap();
            for i in 0..1000u32 {
                l.send(Endpoint::Client, &i.to_be_bytes(), &part(4), false, 0).unwrap();
            }
            l.poll(u64::MAX).into_iter().map(|d| d.bytes).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.len() > 700 && a.len() < 900);
    }

    #[test]
    fn oversized_rejected() {
        let cfg = NetConfig { mtu: 100, ..Default::default() };
        let mut l = Link::new(LinkKind::Datagram, cfg).unwrap();
        assert!(matches!(
            l.send(Endpoint::Client, &[0; 101], &part(101), false, 0),
            Err(Error::OversizedDatagram { len: 101, mtu: 100 })
        ));
    }

    #[test]
    fn framing_and_duplicates_counted() {
        let cfg = NetConfig { framing_overhead: 10, ..Default::default() };
        let mut l = Link::new(LinkKind::Datagram, cfg).unwrap();
        assert_eq!(l.stats(), WireStats::default());
        l.send(Endpoint::Client, &[0; 100], &part(80), false, 0).unwrap();
        let s = l.stats();
        assert_eq!((s.total(), s.framed_total(), s.record_overhead), (100, 110, 20));
        assert!(s.closes());

        let cfg = NetConfig { dup_rate: 1.0, ..Default::default() };
        let mut l = Link::new(LinkKind::Datagram, cfg).unwrap();
        l.send(Endpoint::Server, &[0; 50], &part(50), false, 0).unwrap();
        assert_eq!(l.stats().bytes_s2c, 100);
        assert_eq!(l.poll(u64::MAX).len(), 2);
        assert!(l.stats().closes());
    }

    #[test]
    fn rebind_changes_source() {
        let mut l = Link::new(LinkKind::Datagram, NetConfig::default()).unwrap();
        let before = l.address(Endpoint::Client);
        l.rebind(Endpoint::Client, before, 0);
        assert_eq!(l.address(Endpoint::Client), before);
        l.rebind(Endpoint::Client, Addr(99), 0);
        l.send(Endpoint::Client, &[1], &part(1), false, 0).unwrap();
        assert_eq!(l.poll(100)[0].from_addr, Addr(99));
    }

    #[test]
    fn stream_is_ordered_and_complete() {
        let cfg = NetConfig { seed: 5, ..Default::default() };
        let mut l = Link::new(LinkKind::Stream, cfg).unwrap();
        let mut sent = Vec::new();
        for i in 0..50u8 {
            let chunk = vec![i; 1 + i as usize];
            sent.extend_from_slice(&chunk);
            l.send(Endpoint::Server, &chunk, &part(chunk.len()), false, (50 - i) as u64).unwrap();
        }
        let got: Vec<u8> = l.poll(u64::MAX).into_iter().flat_map(|d| d.bytes).collect();
        assert_eq!(got, sent);
    }

    #[test]
    fn counting_stops_at_close() {
        let mut l = Link::new(LinkKind::Datagram, NetConfig::default()).unwrap();
        l.send(Endpoint::Client, &[0; 10], &part(10), false, 0).unwrap();
        l.close();
        l.send(Endpoint::Client, &[0; 10], &part(10), false, 0).unwrap();
        assert_eq!(l.stats().total(), 10);
        assert_eq!(l.poll(100).len(), 2);
    }
}
