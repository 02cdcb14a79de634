use rand::RngCore;

use crate::crypto::{
    ecdhe_keypair, ecdhe_shared, message_hash_message, NamedGroup, SignatureScheme, SuiteId, Transcript,
};
use crate::error::{DecodeError, Error};
use crate::key_schedule::{finished_mac, verify_finished, KeySchedule, PskKind};
use crate::messages::{
    build_certificate, build_certificate_request, build_certificate_verify, build_encrypted_extensions, build_finished,
    build_new_session_ticket, build_server_hello, ext_type, find_ext, protocol_version, select_group, select_suite,
    truncated_client_hello, verify_certificate_verify, verify_synthetic_certificate, CertificatePayload,
    CertificateVerify, ClientHello, Extension, HandshakeMessage, KeyShareEntry, ServerHelloParams, PSK_DHE_KE, PSK_KE,
};
use crate::{Protocol, SimRng};

use super::config::{AuthMode, Config};
use super::connection::{
    Connection, EPOCH_APPLICATION, EPOCH_EARLY, EPOCH_HANDSHAKE, HKDF_DERIVE, HKDF_EARLY, HKDF_HANDSHAKE, HKDF_MASTER,
};
use super::listener::TicketEntry;
use super::{EventKind, Phase, Role};

/// Early-data limit advertised in tickets when the server accepts 0-RTT.
const MAX_EARLY_DATA: u32 = 16384;

/// A PSK identity the listener matched against its tables.
#[derive(Clone, Debug)]
pub(crate) struct ResolvedPsk {
    pub secret: Vec<u8>,
    pub kind: PskKind,
    pub suite: SuiteId,
    /// Ticket age within tolerance (always true for external keys).
    pub early_ok: bool,
}

/// What a stateless HelloRetryRequest left behind in its cookie.
#[derive(Clone, Debug)]
pub(crate) struct RetryContext {
    pub client_hello_hash: Vec<u8>,
    /// The HelloRetryRequest as sent, 4-byte header form.
    pub hello_retry_request: Vec<u8>,
    pub ccs_sent: bool,
}

/// Server decisions derived from a ClientHello.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    pub suite: SuiteId,
    pub psk: bool,
    pub dhe: bool,
    pub certificate: bool,
    pub group: Option<NamedGroup>,
    pub client_share: Option<KeyShareEntry>,
}

impl Plan {
    /// The client must retry with a key share for `group`.
    pub fn needs_key_share(&self) -> bool {
        self.group.is_some() && self.client_share.is_none()
    }
}

pub(crate) fn plan_handshake(cfg: &Config, ch: &ClientHello, psk: Option<&ResolvedPsk>) -> Result<Plan, Error> {
    match find_ext(&ch.extensions, ext_type::SUPPORTED_VERSIONS) {
        Some(Extension::SupportedVersionsOffer(v)) if v.contains(&protocol_version(cfg.protocol)) => {}
        _ => return Err(Error::IllegalParameter("supported_versions")),
    }
    let modes: &[u8] = match find_ext(&ch.extensions, ext_type::PSK_KEY_EXCHANGE_MODES) {
        Some(Extension::PskKeyExchangeModes(m)) => m,
        _ => &[],
    };
    let shares: &[KeyShareEntry] = match find_ext(&ch.extensions, ext_type::KEY_SHARE) {
        Some(Extension::KeyShareOffer(s)) => s,
        _ => &[],
    };
    let groups: &[NamedGroup] = match find_ext(&ch.extensions, ext_type::SUPPORTED_GROUPS) {
        Some(Extension::SupportedGroups(g)) => g,
        _ => &[],
    };
    let schemes: &[SignatureScheme] = match find_ext(&ch.extensions, ext_type::SIGNATURE_ALGORITHMS) {
        Some(Extension::SignatureAlgorithms(s)) => s,
        _ => &[],
    };
    let share_for = |g: NamedGroup| shares.iter().find(|s| s.group == g).cloned();

    let offered = find_ext(&ch.extensions, ext_type::PRE_SHARED_KEY).is_some();
    if let Some(p) = psk.filter(|p| offered && ch.cipher_suites.contains(&p.suite) && cfg.suites.contains(&p.suite)) {
        let ke = modes.contains(&PSK_KE);
        let dhe_ok = modes.contains(&PSK_DHE_KE) && !groups.is_empty();
        let prefer_dhe = !matches!(cfg.mode, AuthMode::Psk | AuthMode::ZeroRtt);
        let dhe = match (ke, dhe_ok) {
            (true, true) => Some(prefer_dhe),
            (false, true) => Some(true),
            (true, false) => Some(false),
            (false, false) => None,
        };
        if let Some(dhe) = dhe {
            let group = if dhe { Some(select_group(groups, &cfg.groups)?) } else { None };
            return Ok(Plan {
                suite: p.suite,
                psk: true,
                dhe,
                certificate: false,
                group,
                client_share: group.and_then(share_for),
            });
        }
    }

    let scheme = cfg.certificate.as_ref().and_then(|c| c.signature_scheme()).ok_or(Error::MissingCredential)?;
    if !schemes.contains(&scheme) {
        return Err(Error::MissingCredential);
    }
    let suite = select_suite(&ch.cipher_suites, &cfg.suites)?;
    let group = select_group(groups, &cfg.groups)?;
    Ok(Plan { suite, psk: false, dhe: true, certificate: true, group: Some(group), client_share: share_for(group) })
}

impl Connection {
    pub(crate) fn server(cfg: Config, rng: SimRng, id: u64) -> Connection {
        Connection::new(Role::Server, cfg, rng, id)
    }

    /// Runs the server's first flight in response to `ch`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn server_accept(
        &mut self,
        now: u64,
        ch: ClientHello,
        ch_tls_form: &[u8],
        ch_message_seq: u16,
        psk: Option<ResolvedPsk>,
        psk_error: Option<Error>,
        retry: Option<RetryContext>,
    ) -> Result<(), Error> {
        self.now = now;
        self.recv_msg_seq = ch_message_seq.wrapping_add(1);
        if retry.is_some() {
            self.send_msg_seq = 1;
            self.epoch0_seq = 1;
        }
        self.hs.psk_error = psk_error.clone();
        self.server_first_flight(ch, ch_tls_form, psk, psk_error, retry).map_err(|e| self.fail(e))
    }

    fn server_first_flight(
        &mut self,
        ch: ClientHello,
        ch_tls_form: &[u8],
        psk: Option<ResolvedPsk>,
        psk_error: Option<Error>,
        retry: Option<RetryContext>,
    ) -> Result<(), Error> {
        let cfg = self.cfg.clone();
        let protocol = cfg.protocol;
        let plan = match plan_handshake(&cfg, &ch, psk.as_ref()) {
            Ok(p) => p,
            Err(e) => return Err(psk_error.unwrap_or(e)),
        };
        if plan.needs_key_share() {
            return Err(Error::IllegalParameter("key_share"));
        }
        let hash = plan.suite.params()?.hash_alg;
        self.suite = Some(plan.suite);

        let mut t = Transcript::new(hash);
        if let Some(r) = &retry {
            let mh = message_hash_message(&r.client_hello_hash);
            t.update(&mh);
            t.update(&r.hello_retry_request);
            self.key_inputs.transcript = vec![mh, r.hello_retry_request.clone()];
            self.hs.ccs_sent = r.ccs_sent;
            self.hs.retried = true;
        }
        let schedule = if plan.psk {
            let p = psk.as_ref().expect("plan uses the resolved PSK");
            let ks = KeySchedule::with_psk(p.suite, protocol, Some(&p.secret), p.kind)?;
            self.key_inputs.psk = Some(p.secret.clone());
            self.key_inputs.resumption = p.kind == PskKind::Resumption;
            self.counters.hkdf_ops += HKDF_EARLY + HKDF_DERIVE;
            let truncated = truncated_client_hello(&ch).ok_or(Error::Decode(DecodeError::PskNotLast))?;
            let Some(Extension::PreSharedKeyOffer(offer)) = ch.extensions.last() else {
                return Err(Error::Decode(DecodeError::PskNotLast));
            };
            let binder = offer.binders.first().ok_or(Error::Decode(DecodeError::InvalidValue("binders")))?;
            self.counters.hash_blocks += hash.blocks_for(t.len() + truncated.len());
            if !ks.verify_binder(&t.current_with(&truncated), binder)? {
                return Err(Error::BadBinder);
            }
            ks
        } else {
            self.counters.hkdf_ops += HKDF_EARLY;
            KeySchedule::with_psk(plan.suite, protocol, None, PskKind::External)?
        };
        self.schedule = Some(schedule);
        self.counters.hash_blocks += hash.blocks_for(t.len());
        self.transcript = Some(t);
        self.transcript_add(ch_tls_form);
        self.hs.psk_accepted = plan.psk;
        self.hs.dhe = plan.dhe;

        let wants_early = find_ext(&ch.extensions, ext_type::EARLY_DATA).is_some();
        let early = wants_early
            && plan.psk
            && cfg.accept_early_data
            && retry.is_none()
            && psk.as_ref().is_some_and(|p| p.early_ok);
        if early {
            let th = self.transcript_hash()?;
            let secret = self.schedule_mut()?.derive_early_traffic(&th)?;
            self.counters.hkdf_ops += HKDF_DERIVE;
            self.install_read(EPOCH_EARLY, &secret)?;
            self.tls_read_epoch = EPOCH_EARLY;
        } else if wants_early && protocol == Protocol::Tls {
            self.hs.skip_early = true;
        }
        self.hs.early_accepted = early;

        let (share, shared) = if plan.dhe {
            let group = plan.group.expect("dhe plan has a group");
            let client = plan.client_share.as_ref().expect("checked above");
            let (k, pk) = ecdhe_keypair(group, &mut self.rng)?;
            let s = ecdhe_shared(&k, &client.key_exchange)?;
            self.counters.dh_ops += 2;
            self.key_inputs.dhe_shared = Some(s.to_vec());
            (Some(KeyShareEntry { group, key_exchange: pk }), Some(s))
        } else {
            (None, None)
        };
        let mut random = [0u8; 32];
        self.rng.fill_bytes(&mut random);
        let sh = build_server_hello(&ServerHelloParams {
            protocol,
            random,
            session_id_echo: ch.session_id.clone(),
            suite: plan.suite,
            key_share: share,
            psk_selected: plan.psk.then_some(0),
        });

        self.begin_flight();
        self.send_handshake(&HandshakeMessage::ServerHello(sh), 0)?;
        if protocol == Protocol::Tls && !ch.session_id.is_empty() {
            self.send_ccs();
        }
        let th = self.transcript_hash()?;
        self.schedule_mut()?.advance_handshake(shared.as_ref().map(|s| s.as_slice()), &th)?;
        self.counters.hkdf_ops += HKDF_HANDSHAKE;
        let s_hs = self.schedule()?.server_hs_traffic()?.to_vec();
        let c_hs = self.schedule()?.client_hs_traffic()?.to_vec();
        self.install_write(EPOCH_HANDSHAKE, &s_hs)?;
        self.install_read(EPOCH_HANDSHAKE, &c_hs)?;
        self.write_epoch = EPOCH_HANDSHAKE;
        if !early {
            self.tls_read_epoch = EPOCH_HANDSHAKE;
        }

        let cid = match (cfg.cid_len, find_ext(&ch.extensions, ext_type::CONNECTION_ID)) {
            (Some(len), Some(Extension::ConnectionId(client_cid))) => {
                self.cid_peer = Some(client_cid.clone());
                let mut mine = vec![0u8; len];
                self.rng.fill_bytes(&mut mine);
                self.cid_local = Some(mine.clone());
                Some(mine)
            }
            _ => None,
        };
        let sni_ack = plan.certificate && find_ext(&ch.extensions, ext_type::SERVER_NAME).is_some();
        self.send_handshake(&build_encrypted_extensions(early, cid, sni_ack), EPOCH_HANDSHAKE)?;
        if plan.certificate {
            if cfg.mutual_auth {
                let schemes: Vec<SignatureScheme> =
                    cfg.groups.iter().filter_map(|g| g.curve().ok()).map(SignatureScheme::for_curve).collect();
                self.send_handshake(&build_certificate_request(&schemes), EPOCH_HANDSHAKE)?;
                self.hs.cert_requested = true;
            }
            self.send_handshake(&build_certificate(cfg.certificate.as_ref())?, EPOCH_HANDSHAKE)?;
            let th = self.transcript_hash()?;
            let cv = build_certificate_verify(cfg.certificate.as_ref(), true, &th)?;
            self.counters.sign_ops += 1;
            self.send_handshake(&cv, EPOCH_HANDSHAKE)?;
        }
        let th = self.transcript_hash()?;
        let mac = finished_mac(hash, self.schedule()?.server_hs_traffic()?, &th, protocol)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        self.send_handshake(&build_finished(mac), EPOCH_HANDSHAKE)?;
        let th_sf = self.transcript_hash()?;
        self.schedule_mut()?.advance_master(&th_sf)?;
        self.counters.hkdf_ops += HKDF_MASTER;
        let s_ap = self.schedule()?.server_ap_traffic()?.to_vec();
        self.install_write(EPOCH_APPLICATION, &s_ap)?;
        self.write_epoch = EPOCH_APPLICATION;
        self.phase = Phase::WaitClientFlight;
        self.end_flight();
        Ok(())
    }

    pub(crate) fn server_message(&mut self, msg: HandshakeMessage, tls_form: &[u8]) -> Result<(), Error> {
        let tls = self.cfg.protocol == Protocol::Tls;
        let awaiting_eoed = tls && self.hs.early_accepted && self.tls_read_epoch == EPOCH_EARLY;
        match (self.phase, msg) {
            (Phase::WaitClientFlight, HandshakeMessage::EndOfEarlyData) if awaiting_eoed => {
                self.transcript_add(tls_form);
                self.tls_read_epoch = EPOCH_HANDSHAKE;
                Ok(())
            }
            (Phase::WaitClientFlight, HandshakeMessage::Certificate(c))
                if self.hs.cert_requested && self.hs.peer_key.is_none() && !awaiting_eoed =>
            {
                self.on_client_certificate(c, tls_form)
            }
            (Phase::WaitClientFlight, HandshakeMessage::CertificateVerify(cv))
                if self.hs.peer_key.is_some() && !self.hs.peer_cv_verified =>
            {
                self.on_client_certificate_verify(cv, tls_form)
            }
            (Phase::WaitClientFlight, HandshakeMessage::Finished(mac)) if !awaiting_eoed => {
                if self.hs.cert_requested && !self.hs.peer_cv_verified {
                    return Err(Error::UnexpectedMessage("Finished before client CertificateVerify".into()));
                }
                self.on_client_finished(mac, tls_form)
            }
            (phase, m) => Err(Error::UnexpectedMessage(format!("{} in {phase:?}", m.name()))),
        }
    }

    fn on_client_certificate(&mut self, c: CertificatePayload, tls_form: &[u8]) -> Result<(), Error> {
        let entry = c.entries.first().ok_or(Error::MissingCredential)?;
        self.counters.verify_ops += 1;
        let (_, pk) = verify_synthetic_certificate(&entry.data)?;
        if self.cfg.peer_public_key.as_ref().is_some_and(|pin| *pin != pk) {
            return Err(Error::IllegalParameter("certificate key"));
        }
        self.hs.peer_key = Some(pk);
        self.transcript_add(tls_form);
        Ok(())
    }

    fn on_client_certificate_verify(&mut self, cv: CertificateVerify, tls_form: &[u8]) -> Result<(), Error> {
        let th = self.transcript_hash()?;
        let pk = self.hs.peer_key.clone().expect("guarded by caller");
        self.counters.verify_ops += 1;
        if !verify_certificate_verify(&pk, &cv, false, &th) {
            return Err(Error::BadSignature);
        }
        self.hs.peer_cv_verified = true;
        self.transcript_add(tls_form);
        Ok(())
    }

    fn on_client_finished(&mut self, mac: Vec<u8>, tls_form: &[u8]) -> Result<(), Error> {
        let protocol = self.cfg.protocol;
        let th = self.transcript_hash()?;
        let hash = self.schedule()?.hash();
        let ok = verify_finished(hash, self.schedule()?.client_hs_traffic()?, &th, &mac, protocol)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        if !ok {
            return Err(Error::BadFinished);
        }
        self.transcript_add(tls_form);
        let th_cf = self.transcript_hash()?;
        self.schedule_mut()?.derive_resumption_master(&th_cf)?;
        self.counters.hkdf_ops += HKDF_DERIVE;
        let c_ap = self.schedule()?.client_ap_traffic()?.to_vec();
        self.install_read(EPOCH_APPLICATION, &c_ap)?;
        self.drop_read(EPOCH_EARLY);
        self.tls_read_epoch = EPOCH_APPLICATION;
        self.phase = Phase::Connected;
        self.emit(EventKind::HandshakeComplete);
        if protocol == Protocol::Dtls {
            self.request_ack();
        }
        if self.cfg.tickets {
            self.issue_ticket()?;
        }
        Ok(())
    }

    fn issue_ticket(&mut self) -> Result<(), Error> {
        let mut ticket = vec![0u8; 16];
        self.rng.fill_bytes(&mut ticket);
        let age_add = self.rng.next_u32();
        let nonce = self.hs.ticket_counter.to_be_bytes().to_vec();
        self.hs.ticket_counter += 1;
        let schedule = self.schedule()?;
        let psk = schedule.resumption_psk(&nonce)?;
        let suite = schedule.suite().id;
        self.counters.hkdf_ops += HKDF_DERIVE;
        let max_early = self.cfg.accept_early_data.then_some(MAX_EARLY_DATA);
        let lifetime = self.cfg.ticket_lifetime_s;
        self.hs.issued.push(TicketEntry {
            ticket: ticket.clone(),
            psk,
            suite,
            issued_at_ms: self.now,
            lifetime_s: lifetime,
            age_add,
            max_early_data: max_early.unwrap_or(0),
        });
        if self.cfg.protocol == Protocol::Dtls {
            // the pending ACK for the client's flight goes out first
            self.flush_ack()?;
        }
        self.begin_flight();
        let nst = build_new_session_ticket(lifetime, age_add, nonce, ticket, max_early);
        self.send_handshake(&nst, EPOCH_APPLICATION)?;
        self.end_flight();
        Ok(())
    }
}
