use rand::RngCore;

use crate::crypto::{ecdhe_keypair, ecdhe_shared, message_hash_message, SignatureScheme, Transcript};
use crate::error::{DecodeError, Error};
use crate::key_schedule::{finished_mac, verify_finished, KeySchedule, PskKind};
use crate::messages::{
    build_certificate, build_certificate_verify, build_client_hello, build_finished, build_retry_client_hello,
    ext_type, find_ext, protocol_version, verify_certificate_verify, verify_synthetic_certificate, CertificatePayload,
    CertificateVerify, ClientHelloParams, Extension, HandshakeMessage, KeyShareEntry, NewSessionTicket, PskIdentity,
    ServerHello, PSK_DHE_KE, PSK_KE,
};
use crate::{Protocol, SimRng};

use super::config::{AuthMode, ClientTicket, Config};
use super::connection::{
    Connection, EPOCH_APPLICATION, EPOCH_EARLY, EPOCH_HANDSHAKE, HKDF_DERIVE, HKDF_EARLY, HKDF_HANDSHAKE, HKDF_MASTER,
};
use super::{EventKind, Phase, Role};

impl Connection {
    /// A client connection; [`Connection::start`] sends the ClientHello.
    pub fn client(cfg: Config, rng: SimRng, id: u64) -> Result<Connection, Error> {
        cfg.validate()?;
        if cfg.mode.uses_psk() && cfg.psk.is_none() {
            return Err(Error::Config(format!("{} needs a PSK", cfg.mode)));
        }
        if let Some(p) = &cfg.psk {
            if !cfg.suites.contains(&p.suite) {
                return Err(Error::Config("PSK suite is not offered".into()));
            }
        }
        if cfg.mode == AuthMode::PkMutual && cfg.certificate.is_none() {
            return Err(Error::MissingCredential);
        }
        Ok(Connection::new(Role::Client, cfg, rng, id))
    }

    pub fn start(&mut self, now: u64) -> Result<(), Error> {
        if self.role != Role::Client || self.phase != Phase::Start {
            return Err(Error::UnexpectedMessage("start on a running connection".into()));
        }
        self.now = now;
        self.client_start().map_err(|e| self.fail(e))
    }

    fn client_start(&mut self) -> Result<(), Error> {
        let cfg = self.cfg.clone();
        let psk = cfg.psk.clone();
        let offer_share = cfg.mode.uses_ecdhe();
        let key_share = if offer_share {
            let group = cfg.groups[0];
            let (k, pk) = ecdhe_keypair(group, &mut self.rng)?;
            self.counters.dh_ops += 1;
            self.hs.ecdhe = Some(k);
            Some(KeyShareEntry { group, key_exchange: pk })
        } else {
            None
        };
        let signature_schemes = if cfg.mode.uses_certificates() {
            cfg.groups.iter().filter_map(|g| g.curve().ok()).map(SignatureScheme::for_curve).collect()
        } else {
            Vec::new()
        };
        let early = cfg.mode == AuthMode::ZeroRtt && cfg.early_data.is_some();
        let schedule = match &psk {
            Some(p) => {
                self.counters.hkdf_ops += HKDF_EARLY + HKDF_DERIVE;
                Some(KeySchedule::with_psk(p.suite, cfg.protocol, Some(&p.secret), p.kind)?)
            }
            None => None,
        };
        let identity = psk.as_ref().map(|p| PskIdentity {
            identity: p.identity.clone(),
            obfuscated_ticket_age: match p.kind {
                PskKind::External => 0,
                PskKind::Resumption => (self.now.saturating_sub(p.issued_at_ms) as u32).wrapping_add(p.age_add),
            },
        });
        let connection_id = cfg.cid_len.map(|l| {
            let mut c = vec![0u8; l];
            self.rng.fill_bytes(&mut c);
            c
        });
        self.cid_local = connection_id.clone();
        let params = ClientHelloParams {
            protocol: cfg.protocol,
            suites: cfg.suites.clone(),
            groups: if offer_share { cfg.groups.clone() } else { Vec::new() },
            key_share,
            signature_schemes,
            server_name: cfg.server_name.clone().filter(|_| cfg.mode.uses_certificates()),
            psk: identity,
            psk_modes: match cfg.mode {
                AuthMode::Psk | AuthMode::ZeroRtt => vec![PSK_KE],
                _ => vec![PSK_DHE_KE],
            },
            early_data: early,
            compat: cfg.compat,
            connection_id,
            cookie: None,
        };
        let empty = schedule.as_ref().map(|s| Transcript::new(s.hash()));
        let ch = build_client_hello(&params, schedule.as_ref().zip(empty.as_ref()), &mut self.rng)?;
        self.schedule = schedule;
        self.hs.psk_offered = psk.is_some();
        self.hs.early_offered = early;

        self.begin_flight();
        self.send_handshake(&HandshakeMessage::ClientHello(ch.clone()), 0)?;
        self.hs.client_hello = Some(ch);
        if early {
            let hash = self.schedule()?.hash();
            self.counters.hash_blocks += hash.blocks_for(self.pre_transcript.len());
            let th = hash.hash(&self.pre_transcript);
            let secret = self.schedule_mut()?.derive_early_traffic(&th)?;
            self.counters.hkdf_ops += HKDF_DERIVE;
            self.install_write(EPOCH_EARLY, &secret)?;
            self.write_epoch = EPOCH_EARLY;
            if cfg.compat {
                self.send_ccs();
            }
            let data = cfg.early_data.clone().unwrap_or_default();
            self.send_data_records(EPOCH_EARLY, &data, "EarlyData")?;
        }
        self.phase = Phase::WaitSh;
        self.end_flight();
        Ok(())
    }

    pub(crate) fn client_message(&mut self, msg: HandshakeMessage, tls_form: &[u8]) -> Result<(), Error> {
        match (self.phase, msg) {
            (Phase::WaitSh, HandshakeMessage::ServerHello(sh)) if sh.is_hello_retry_request() => {
                self.on_hello_retry_request(sh, tls_form)
            }
            (Phase::WaitSh, HandshakeMessage::ServerHello(sh)) => self.on_server_hello(sh, tls_form),
            (Phase::WaitEe, HandshakeMessage::EncryptedExtensions(exts)) => {
                self.on_encrypted_extensions(exts, tls_form)
            }
            (Phase::WaitCertCr, HandshakeMessage::CertificateRequest(cr)) if !self.hs.cert_requested => {
                if !cr.context.is_empty() {
                    return Err(Error::IllegalParameter("certificate_request_context"));
                }
                self.transcript_add(tls_form);
                self.hs.cert_requested = true;
                Ok(())
            }
            (Phase::WaitCertCr, HandshakeMessage::Certificate(c)) => self.on_server_certificate(c, tls_form),
            (Phase::WaitCv, HandshakeMessage::CertificateVerify(cv)) => self.on_server_certificate_verify(cv, tls_form),
            (Phase::WaitFinished, HandshakeMessage::Finished(mac)) => self.on_server_finished(mac, tls_form),
            (Phase::Connected, HandshakeMessage::NewSessionTicket(nst)) => self.on_ticket(nst),
            (phase, m) => Err(Error::UnexpectedMessage(format!("{} in {phase:?}", m.name()))),
        }
    }

    fn check_server_hello_common(&self, sh: &ServerHello) -> Result<(), Error> {
        let ch = self.hs.client_hello.as_ref().ok_or(Error::UnexpectedMessage("ServerHello".into()))?;
        match find_ext(&sh.extensions, ext_type::SUPPORTED_VERSIONS) {
            Some(Extension::SupportedVersionsSelected(v)) if *v == protocol_version(self.cfg.protocol) => {}
            _ => return Err(Error::IllegalParameter("supported_versions")),
        }
        if !ch.cipher_suites.contains(&sh.cipher_suite) {
            return Err(Error::IllegalParameter("cipher_suite"));
        }
        if sh.session_id != ch.session_id {
            return Err(Error::IllegalParameter("legacy_session_id_echo"));
        }
        Ok(())
    }

    fn on_hello_retry_request(&mut self, sh: ServerHello, tls_form: &[u8]) -> Result<(), Error> {
        if self.hs.retried {
            return Err(Error::UnexpectedMessage("second HelloRetryRequest".into()));
        }
        self.hs.retried = true;
        self.check_server_hello_common(&sh)?;
        let suite = sh.cipher_suite.params()?;
        if self.schedule.as_ref().is_some_and(|s| s.hash() != suite.hash_alg) {
            return Err(Error::IllegalParameter("cipher_suite"));
        }
        let mut t = Transcript::new(suite.hash_alg);
        t.update(&self.pre_transcript);
        t.replace_with_message_hash();
        self.counters.hash_blocks += suite.hash_alg.blocks_for(self.pre_transcript.len()) + 2;
        self.transcript = Some(t);
        self.key_inputs.transcript = vec![message_hash_message(&suite.hash_alg.hash(&self.pre_transcript))];
        self.transcript_add(tls_form);

        let cookie = match find_ext(&sh.extensions, ext_type::COOKIE) {
            Some(Extension::Cookie(c)) => Some(c.clone()),
            _ => None,
        };
        let new_share = match find_ext(&sh.extensions, ext_type::KEY_SHARE) {
            Some(Extension::KeyShareRetry(g)) => {
                let sent = self.hs.ecdhe.as_ref().map(|k| crate::crypto::NamedGroup::for_curve(k.curve()));
                if !self.cfg.groups.contains(g) || sent == Some(*g) {
                    return Err(Error::IllegalParameter("key_share"));
                }
                let (k, pk) = ecdhe_keypair(*g, &mut self.rng)?;
                self.counters.dh_ops += 1;
                self.hs.ecdhe = Some(k);
                Some(KeyShareEntry { group: *g, key_exchange: pk })
            }
            _ => None,
        };
        if cookie.is_none() && new_share.is_none() {
            return Err(Error::IllegalParameter("hello_retry_request"));
        }
        // 0-RTT is abandoned after a retry
        self.hs.early_offered = false;
        self.drop_write(EPOCH_EARLY);
        self.write_epoch = 0;

        let ch1 = self.hs.client_hello.clone().expect("ClientHello sent");
        let binder = self.schedule.as_ref().zip(self.transcript.as_ref());
        let ch2 = build_retry_client_hello(&ch1, cookie, new_share, binder)?;
        if self.hs.psk_offered {
            self.counters.hkdf_ops += HKDF_DERIVE;
        }
        self.begin_flight();
        if self.cfg.compat {
            self.send_ccs();
        }
        self.send_handshake(&HandshakeMessage::ClientHello(ch2.clone()), 0)?;
        self.hs.client_hello = Some(ch2);
        self.end_flight();
        Ok(())
    }

    fn on_server_hello(&mut self, sh: ServerHello, tls_form: &[u8]) -> Result<(), Error> {
        self.check_server_hello_common(&sh)?;
        let suite = sh.cipher_suite.params()?;
        let accepted = match find_ext(&sh.extensions, ext_type::PRE_SHARED_KEY) {
            Some(Extension::PreSharedKeySelected(0)) if self.hs.psk_offered => true,
            Some(_) => return Err(Error::IllegalParameter("pre_shared_key")),
            None => false,
        };
        if accepted && self.schedule()?.suite().id != sh.cipher_suite {
            return Err(Error::IllegalParameter("cipher_suite"));
        }
        let shared = match find_ext(&sh.extensions, ext_type::KEY_SHARE) {
            Some(Extension::KeyShareSelected(entry)) => {
                let k = self.hs.ecdhe.as_ref().ok_or(Error::IllegalParameter("key_share"))?;
                if entry.group != crate::crypto::NamedGroup::for_curve(k.curve()) {
                    return Err(Error::IllegalParameter("key_share"));
                }
                let s = ecdhe_shared(k, &entry.key_exchange)?;
                self.counters.dh_ops += 1;
                self.key_inputs.dhe_shared = Some(s.to_vec());
                Some(s)
            }
            Some(_) => return Err(Error::IllegalParameter("key_share")),
            None => None,
        };
        if shared.is_none() && !accepted {
            return Err(Error::IllegalParameter("key_share"));
        }
        if !accepted {
            if !self.cfg.mode.uses_certificates() {
                return Err(Error::IllegalParameter("pre_shared_key"));
            }
            self.counters.hkdf_ops += HKDF_EARLY;
            self.schedule = Some(KeySchedule::with_psk(sh.cipher_suite, self.cfg.protocol, None, PskKind::External)?);
        }
        self.hs.psk_accepted = accepted;
        self.hs.dhe = shared.is_some();
        if accepted {
            let p = self.cfg.psk.as_ref().expect("accepted PSK was offered");
            self.key_inputs.psk = Some(p.secret.clone());
            self.key_inputs.resumption = p.kind == PskKind::Resumption;
        }
        self.suite = Some(sh.cipher_suite);

        match &self.transcript {
            Some(t) if t.alg() != suite.hash_alg => return Err(Error::IllegalParameter("cipher_suite")),
            Some(_) => {}
            None => {
                let mut t = Transcript::new(suite.hash_alg);
                t.update(&self.pre_transcript);
                self.counters.hash_blocks += suite.hash_alg.blocks_for(self.pre_transcript.len());
                self.transcript = Some(t);
            }
        }
        self.transcript_add(tls_form);
        let th = self.transcript_hash()?;
        self.schedule_mut()?.advance_handshake(shared.as_ref().map(|s| s.as_slice()), &th)?;
        self.counters.hkdf_ops += HKDF_HANDSHAKE;
        let s_hs = self.schedule()?.server_hs_traffic()?.to_vec();
        let c_hs = self.schedule()?.client_hs_traffic()?.to_vec();
        self.install_read(EPOCH_HANDSHAKE, &s_hs)?;
        self.install_write(EPOCH_HANDSHAKE, &c_hs)?;
        self.tls_read_epoch = EPOCH_HANDSHAKE;
        if self.cfg.protocol == Protocol::Dtls || !self.hs.early_offered {
            self.write_epoch = EPOCH_HANDSHAKE;
        }
        self.phase = Phase::WaitEe;
        Ok(())
    }

    fn on_encrypted_extensions(&mut self, exts: Vec<Extension>, tls_form: &[u8]) -> Result<(), Error> {
        let early = find_ext(&exts, ext_type::EARLY_DATA).is_some();
        if early && !(self.hs.early_offered && self.hs.psk_accepted) {
            return Err(Error::IllegalParameter("early_data"));
        }
        if let Some(Extension::ConnectionId(cid)) = find_ext(&exts, ext_type::CONNECTION_ID) {
            if self.cid_local.is_none() {
                return Err(Error::IllegalParameter("connection_id"));
            }
            self.cid_peer = Some(cid.clone());
        }
        self.hs.early_accepted = early;
        if !early && self.cfg.protocol == Protocol::Tls {
            self.write_epoch = EPOCH_HANDSHAKE;
        }
        self.transcript_add(tls_form);
        self.phase = if self.hs.psk_accepted { Phase::WaitFinished } else { Phase::WaitCertCr };
        Ok(())
    }

    fn on_server_certificate(&mut self, c: CertificatePayload, tls_form: &[u8]) -> Result<(), Error> {
        let entry = c.entries.first().ok_or(Error::Decode(DecodeError::InvalidValue("certificate")))?;
        self.counters.verify_ops += 1;
        let (_, pk) = verify_synthetic_certificate(&entry.data)?;
        if self.cfg.peer_public_key.as_ref().is_some_and(|pin| *pin != pk) {
            return Err(Error::IllegalParameter("certificate key"));
        }
        self.hs.peer_key = Some(pk);
        self.transcript_add(tls_form);
        self.phase = Phase::WaitCv;
        Ok(())
    }

    fn on_server_certificate_verify(&mut self, cv: CertificateVerify, tls_form: &[u8]) -> Result<(), Error> {
        let th = self.transcript_hash()?;
        let pk = self.hs.peer_key.clone().ok_or(Error::UnexpectedMessage("CertificateVerify".into()))?;
        self.counters.verify_ops += 1;
        if !verify_certificate_verify(&pk, &cv, true, &th) {
            return Err(Error::BadSignature);
        }
        self.transcript_add(tls_form);
        self.phase = Phase::WaitFinished;
        Ok(())
    }

    fn on_server_finished(&mut self, mac: Vec<u8>, tls_form: &[u8]) -> Result<(), Error> {
        let protocol = self.cfg.protocol;
        let th = self.transcript_hash()?;
        let hash = self.schedule()?.hash();
        let ok = verify_finished(hash, self.schedule()?.server_hs_traffic()?, &th, &mac, protocol)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        if !ok {
            return Err(Error::BadFinished);
        }
        self.transcript_add(tls_form);
        let th_sf = self.transcript_hash()?;
        self.schedule_mut()?.advance_master(&th_sf)?;
        self.counters.hkdf_ops += HKDF_MASTER;
        let s_ap = self.schedule()?.server_ap_traffic()?.to_vec();
        self.install_read(EPOCH_APPLICATION, &s_ap)?;
        self.tls_read_epoch = EPOCH_APPLICATION;

        self.begin_flight();
        if protocol == Protocol::Tls && self.hs.early_accepted {
            self.send_handshake(&HandshakeMessage::EndOfEarlyData, EPOCH_EARLY)?;
        }
        if self.cfg.compat {
            self.send_ccs();
        }
        self.write_epoch = EPOCH_HANDSHAKE;
        self.drop_write(EPOCH_EARLY);
        if self.hs.cert_requested {
            let cert = self.cfg.certificate.clone();
            let msg = match &cert {
                Some(c) => build_certificate(Some(c))?,
                None => HandshakeMessage::Certificate(CertificatePayload { context: Vec::new(), entries: Vec::new() }),
            };
            self.send_handshake(&msg, EPOCH_HANDSHAKE)?;
            if let Some(c) = &cert {
                let th = self.transcript_hash()?;
                let cv = build_certificate_verify(Some(c), false, &th)?;
                self.counters.sign_ops += 1;
                self.send_handshake(&cv, EPOCH_HANDSHAKE)?;
            }
        }
        let th = self.transcript_hash()?;
        let mac = finished_mac(hash, self.schedule()?.client_hs_traffic()?, &th, protocol)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        self.send_handshake(&build_finished(mac), EPOCH_HANDSHAKE)?;
        let th_cf = self.transcript_hash()?;
        self.schedule_mut()?.derive_resumption_master(&th_cf)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        let c_ap = self.schedule()?.client_ap_traffic()?.to_vec();
        self.install_write(EPOCH_APPLICATION, &c_ap)?;
        self.write_epoch = EPOCH_APPLICATION;
        self.phase = Phase::Connected;
        self.end_flight();
        self.emit(EventKind::HandshakeComplete);
        Ok(())
    }

    fn on_ticket(&mut self, nst: NewSessionTicket) -> Result<(), Error> {
        let schedule = self.schedule()?;
        let psk = schedule.resumption_psk(&nst.nonce)?;
        let suite = schedule.suite().id;
        self.counters.hkdf_ops += HKDF_DERIVE;
        let max_early_data = match find_ext(&nst.extensions, ext_type::EARLY_DATA) {
            Some(Extension::EarlyDataMax(m)) => *m,
            _ => 0,
        };
        self.hs.tickets.push(ClientTicket {
            ticket: nst.ticket,
            psk,
            suite,
            lifetime_s: nst.lifetime,
            age_add: nst.age_add,
            received_at_ms: self.now,
            max_early_data,
        });
        self.emit(EventKind::Ticket { lifetime_s: nst.lifetime });
        if self.cfg.protocol == Protocol::Dtls {
            self.request_ack();
        }
        Ok(())
    }
}
