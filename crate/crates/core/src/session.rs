//! A client [`Connection`] and a server [`Listener`] joined by a [`Link`],
//! stepped through simulated time.

use rand::SeedableRng;

use crate::error::Error;
use crate::sim_net::{Addr, Endpoint, Link, LinkKind, NetConfig, WireStats};
use crate::state_machine::{Config, Connection, Event, Listener};
use crate::{Protocol, SimRng};

pub struct Session {
    link: Link,
    client: Connection,
    listener: Listener,
    server_id: Option<u64>,
    now: u64,
    events: Vec<Event>,
    client_error: Option<Error>,
    server_error: Option<Error>,
    started: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("now", &self.now).field("client", &self.client.phase()).finish_non_exhaustive()
    }
}

impl Session {
    /// Both endpoint generators are derived from `seed`; the link uses `net.seed`.
    pub fn new(client_cfg: Config, server_cfg: Config, net: NetConfig, seed: u64) -> Result<Self, Error> {
        if client_cfg.protocol != server_cfg.protocol {
            return Err(Error::Config("client and server disagree on protocol".into()));
        }
        let kind = match client_cfg.protocol {
            Protocol::Tls => LinkKind::Stream,
            Protocol::Dtls => LinkKind::Datagram,
        };
        let link = Link::new(kind, net)?;
        let client = Connection::client(client_cfg, SimRng::seed_from_u64(seed.wrapping_mul(2) + 1), 0)?;
        let listener = Listener::new(server_cfg, SimRng::seed_from_u64(seed.wrapping_mul(2)))?;
        Ok(Session {
            link,
            client,
            listener,
            server_id: None,
            now: 0,
            events: Vec::new(),
            client_error: None,
            server_error: None,
            started: false,
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn link_mut(&mut self) -> &mut Link {
        &mut self.link
    }

    pub fn stats(&self) -> WireStats {
        self.link.stats()
    }

    pub fn client(&self) -> &Connection {
        &self.client
    }

    pub fn client_mut(&mut self) -> &mut Connection {
        &mut self.client
    }

    pub fn listener(&self) -> &Listener {
        &self.listener
    }

    pub fn listener_mut(&mut self) -> &mut Listener {
        &mut self.listener
    }

    /// The server connection serving this client, once one exists.
    pub fn server(&self) -> Option<&Connection> {
        self.server_id.and_then(|id| self.listener.connection(id))
    }

    pub fn server_mut(&mut self) -> Option<&mut Connection> {
        self.server_id.and_then(|id| self.listener.connection_mut(id))
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn client_error(&self) -> Option<&Error> {
        self.client_error.as_ref()
    }

    pub fn server_error(&self) -> Option<&Error> {
        self.server_error.as_ref()
    }

    /// First error on either side, client first.
    pub fn error(&self) -> Option<&Error> {
        self.client_error.as_ref().or(self.server_error.as_ref())
    }

    pub fn is_connected(&self) -> bool {
        self.client.is_connected() && self.server().is_some_and(|s| s.is_connected())
    }

    pub fn start(&mut self) -> Result<(), Error> {
        if !self.started {
            self.started = true;
            let r = self.client.start(self.now);
            self.note_client(r);
            self.pump()?;
        }
        Ok(())
    }

    pub fn send_client_data(&mut self, data: &[u8]) -> Result<(), Error> {
        self.client.send_application_data(data, self.now)?;
        self.pump()
    }

    pub fn send_server_data(&mut self, data: &[u8]) -> Result<(), Error> {
        let id = self.server_id.ok_or(Error::NotReady)?;
        self.listener.send_application_data(id, data, self.now)?;
        self.pump()
    }

    /// Changes the client's source address, as a NAT rebinding would.
    pub fn rebind_client(&mut self, addr: Addr) {
        self.link.rebind(Endpoint::Client, addr, self.now);
    }

    /// Earliest pending delivery or timer.
    pub fn next_wakeup(&self) -> Option<u64> {
        [self.link.next_delivery(), self.client.next_timeout(), self.listener.next_timeout()]
            .into_iter()
            .flatten()
            .min()
    }

    /// Advances to the next wakeup and handles everything due then.
    /// Returns false when nothing is pending.
    pub fn step(&mut self) -> Result<bool, Error> {
        self.start()?;
        let Some(t) = self.next_wakeup() else {
            return Ok(false);
        };
        self.now = self.now.max(t);
        for d in self.link.poll(self.now) {
            match d.to {
                Endpoint::Client => {
                    let r = match self.link.kind() {
                        LinkKind::Stream => self.client.handle_stream(&d.bytes, self.now),
                        LinkKind::Datagram => self.client.handle_datagram(&d.bytes, self.now),
                    };
                    self.note_client(r);
                }
                Endpoint::Server => {
                    let r = match self.link.kind() {
                        LinkKind::Stream => self.listener.handle_stream(d.from_addr, &d.bytes, self.now),
                        LinkKind::Datagram => self.listener.handle_datagram(d.from_addr, &d.bytes, self.now),
                    };
                    match r {
                        Ok(Some(id)) => self.server_id = Some(id),
                        Ok(None) => {}
                        Err(e) => {
                            self.server_error.get_or_insert(e);
                        }
                    }
                }
            }
            self.pump()?;
        }
        if self.client.next_timeout().is_some_and(|t| t <= self.now) {
            let r = self.client.handle_timeout(self.now);
            self.note_client(r);
        }
        if self.listener.next_timeout().is_some_and(|t| t <= self.now) {
            if let Err(e) = self.listener.handle_timeout(self.now) {
                self.server_error.get_or_insert(e);
            }
        }
        self.pump()?;
        Ok(true)
    }

    /// Steps until `done` holds, an error occurs, nothing is pending, or
    /// simulated time passes `deadline_ms`.
    pub fn run_until(&mut self, deadline_ms: u64, mut done: impl FnMut(&Session) -> bool) -> Result<bool, Error> {
        self.start()?;
        loop {
            if done(self) {
                return Ok(true);
            }
            if self.error().is_some() || self.next_wakeup().is_none_or(|t| t > deadline_ms) {
                return Ok(false);
            }
            self.step()?;
        }
    }

    /// Runs the handshake to completion on both sides.
    pub fn handshake(&mut self, deadline_ms: u64) -> Result<(), Error> {
        if self.run_until(deadline_ms, |s| s.is_connected())? {
            return Ok(());
        }
        // let the peer see any alert before reporting
        while self.next_wakeup().is_some_and(|t| t <= deadline_ms) {
            self.step()?;
        }
        Err(self.error().cloned().unwrap_or(Error::HandshakeTimeout))
    }

    /// Delivers everything in flight and lets timers settle.
    pub fn settle(&mut self, deadline_ms: u64) -> Result<(), Error> {
        self.run_until(deadline_ms, |s| s.next_wakeup().is_none())?;
        Ok(())
    }

    fn note_client(&mut self, r: Result<(), Error>) {
        if let Err(e) = r {
            self.client_error.get_or_insert(e);
        }
    }

    fn pump(&mut self) -> Result<(), Error> {
        for out in self.client.take_outgoing() {
            self.link.send(Endpoint::Client, &out.bytes, &out.parts, out.retransmission, self.now)?;
        }
        self.events.extend(self.client.take_events());
        let client_addr = self.link.address(Endpoint::Client);
        for (to, out) in self.listener.take_outgoing() {
            // replies to a stale address never reach the client
            if to == client_addr {
                self.link.send(Endpoint::Server, &out.bytes, &out.parts, out.retransmission, self.now)?;
            }
        }
        self.events.extend(self.listener.take_events());
        Ok(())
    }
}
