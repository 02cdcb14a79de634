use rand::{CryptoRng, RngCore};

use crate::crypto::{sign, verify, HashAlg, NamedGroup, SignatureScheme, SuiteId, Transcript};
use crate::error::Error;
use crate::key_schedule::KeySchedule;
use crate::Protocol;

use super::credential::{certificate_verify_content, Credential};
use super::extensions::{
    ext_type, find_ext, Extension, KeyShareEntry, PskIdentity, PskOffer, VERSION_DTLS13, VERSION_TLS13,
};
use super::handshake::{
    CertificateEntry, CertificatePayload, CertificateRequest, CertificateVerify, ClientHello, HandshakeMessage,
    NewSessionTicket, ServerHello, HRR_RANDOM, LEGACY_VERSION_DTLS12, LEGACY_VERSION_TLS12,
};

pub fn legacy_version(protocol: Protocol) -> u16 {
    match protocol {
        Protocol::Tls => LEGACY_VERSION_TLS12,
        Protocol::Dtls => LEGACY_VERSION_DTLS12,
    }
}

pub fn protocol_version(protocol: Protocol) -> u16 {
    match protocol {
        Protocol::Tls => VERSION_TLS13,
        Protocol::Dtls => VERSION_DTLS13,
    }
}

/// Everything the client decided to offer.
#[derive(Clone, Debug)]
pub struct ClientHelloParams {
    pub protocol: Protocol,
    pub suites: Vec<SuiteId>,
    /// supported_groups; empty when no (EC)DHE is offered.
    pub groups: Vec<NamedGroup>,
    pub key_share: Option<KeyShareEntry>,
    /// signature_algorithms; empty when certificates are not offered.
    pub signature_schemes: Vec<SignatureScheme>,
    pub server_name: Option<String>,
    pub psk: Option<PskIdentity>,
    pub psk_modes: Vec<u8>,
    pub early_data: bool,
    pub compat: bool,
    pub connection_id: Option<Vec<u8>>,
    pub cookie: Option<Vec<u8>>,
}

/// Builds a ClientHello. When a PSK is offered its binder is computed over
/// the truncated message with `binder = (schedule, transcript so far)`.
pub fn build_client_hello(
    params: &ClientHelloParams,
    binder: Option<(&KeySchedule, &Transcript)>,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<ClientHello, Error> {
    if params.early_data && params.psk.is_none() {
        return Err(Error::Config("0-RTT requires a PSK".into()));
    }
    if params.psk.is_none() && params.key_share.is_none() {
        return Err(Error::Config("neither PSK nor key share offered".into()));
    }
    if params.compat && params.protocol == Protocol::Dtls {
        return Err(Error::Config("compatibility mode is TLS only".into()));
    }
    let mut random = [0u8; 32];
    rng.fill_bytes(&mut random);
    let session_id = if params.compat {
        let mut s = vec![0u8; 32];
        rng.fill_bytes(&mut s);
        s
    } else {
        Vec::new()
    };

    let mut exts = vec![Extension::SupportedVersionsOffer(vec![protocol_version(params.protocol)])];
    if let Some(name) = &params.server_name {
        exts.push(Extension::ServerName(name.clone()));
    }
    if !params.groups.is_empty() {
        exts.push(Extension::SupportedGroups(params.groups.clone()));
    }
    if !params.signature_schemes.is_empty() {
        exts.push(Extension::SignatureAlgorithms(params.signature_schemes.clone()));
    }
    if let Some(ks) = &params.key_share {
        exts.push(Extension::KeyShareOffer(vec![ks.clone()]));
    }
    if params.psk.is_some() {
        exts.push(Extension::PskKeyExchangeModes(params.psk_modes.clone()));
    }
    if let Some(c) = &params.cookie {
        exts.push(Extension::Cookie(c.clone()));
    }
    if let Some(cid) = &params.connection_id {
        exts.push(Extension::ConnectionId(cid.clone()));
    }
    if params.early_data {
        exts.push(Extension::EarlyData);
    }
    let mut ch = ClientHello {
        legacy_version: legacy_version(params.protocol),
        random,
        session_id,
        legacy_cookie: (params.protocol == Protocol::Dtls).then(Vec::new),
        cipher_suites: params.suites.clone(),
        compression_methods: vec![0],
        extensions: exts,
    };
    if let Some(identity) = &params.psk {
        let (schedule, transcript) = binder.ok_or(Error::Config("PSK offered without a key schedule".into()))?;
        ch.extensions.push(Extension::PreSharedKeyOffer(PskOffer {
            identities: vec![identity.clone()],
            binders: vec![vec![0; schedule.suite().hash_len]],
        }));
        fill_binder(&mut ch, schedule, transcript)?;
    }
    Ok(ch)
}

/// The ClientHello encoding (TLS framing) up to, not including, the binders list.
pub fn truncated_client_hello(ch: &ClientHello) -> Option<Vec<u8>> {
    let Some(Extension::PreSharedKeyOffer(offer)) = ch.extensions.last() else {
        return None;
    };
    let cut = offer.binders_len();
    let mut enc = HandshakeMessage::ClientHello(ch.clone()).encode_tls();
    enc.truncate(enc.len() - cut);
    Some(enc)
}

/// Recomputes the (single) binder in place. The binder length is fixed by
/// the suite hash, so the truncated prefix does not change while doing so.
pub fn fill_binder(ch: &mut ClientHello, schedule: &KeySchedule, transcript: &Transcript) -> Result<(), Error> {
    let hash_len = schedule.suite().hash_len;
    match ch.extensions.last_mut() {
        Some(Extension::PreSharedKeyOffer(offer)) => offer.binders = vec![vec![0; hash_len]],
        _ => return Err(Error::Config("ClientHello carries no pre_shared_key".into())),
    }
    let truncated = truncated_client_hello(ch).expect("pre_shared_key is last");
    let mac = schedule.compute_binder(&transcript.current_with(&truncated))?;
    if let Some(Extension::PreSharedKeyOffer(offer)) = ch.extensions.last_mut() {
        offer.binders = vec![mac];
    }
    Ok(())
}

/// Second ClientHello after a HelloRetryRequest: same random and session id,
/// echoed cookie, optionally a new key share, early data withdrawn.
pub fn build_retry_client_hello(
    first: &ClientHello,
    cookie: Option<Vec<u8>>,
    key_share: Option<KeyShareEntry>,
    binder: Option<(&KeySchedule, &Transcript)>,
) -> Result<ClientHello, Error> {
    let mut ch = first.clone();
    ch.extensions.retain(|e| !matches!(e.ext_type(), ext_type::EARLY_DATA | ext_type::COOKIE));
    if let Some(ks) = key_share {
        for e in ch.extensions.iter_mut() {
            if let Extension::KeyShareOffer(entries) = e {
                *entries = vec![ks.clone()];
            }
        }
    }
    if let Some(c) = cookie {
        let at = ch
            .extensions
            .iter()
            .position(|e| matches!(e.ext_type(), ext_type::CONNECTION_ID | ext_type::PRE_SHARED_KEY))
            .unwrap_or(ch.extensions.len());
        ch.extensions.insert(at, Extension::Cookie(c));
    }
    if find_ext(&ch.extensions, ext_type::PRE_SHARED_KEY).is_some() {
        let (schedule, transcript) = binder.ok_or(Error::Config("PSK offered without a key schedule".into()))?;
        fill_binder(&mut ch, schedule, transcript)?;
    }
    Ok(ch)
}

pub fn select_suite(offered: &[SuiteId], supported: &[SuiteId]) -> Result<SuiteId, Error> {
    supported.iter().find(|s| offered.contains(s)).copied().ok_or(Error::NoCommonSuite)
}

/// Server preference order over the client's supported_groups.
pub fn select_group(offered: &[NamedGroup], supported: &[NamedGroup]) -> Result<NamedGroup, Error> {
    supported.iter().find(|g| offered.contains(g)).copied().ok_or(Error::NoCommonGroup)
}

#[derive(Clone, Debug)]
pub struct ServerHelloParams {
    pub protocol: Protocol,
    pub random: [u8; 32],
    pub session_id_echo: Vec<u8>,
    pub suite: SuiteId,
    pub key_share: Option<KeyShareEntry>,
    pub psk_selected: Option<u16>,
}

pub fn build_server_hello(p: &ServerHelloParams) -> ServerHello {
    let mut exts = vec![Extension::SupportedVersionsSelected(protocol_version(p.protocol))];
    if let Some(ks) = &p.key_share {
        exts.push(Extension::KeyShareSelected(ks.clone()));
    }
    if let Some(idx) = p.psk_selected {
        exts.push(Extension::PreSharedKeySelected(idx));
    }
    ServerHello {
        legacy_version: legacy_version(p.protocol),
        random: p.random,
        session_id: p.session_id_echo.clone(),
        cipher_suite: p.suite,
        compression_method: 0,
        extensions: exts,
    }
}

pub fn build_hello_retry_request(
    protocol: Protocol,
    session_id_echo: &[u8],
    suite: SuiteId,
    selected_group: Option<NamedGroup>,
    cookie: Option<Vec<u8>>,
) -> ServerHello {
    let mut exts = vec![Extension::SupportedVersionsSelected(protocol_version(protocol))];
    if let Some(g) = selected_group {
        exts.push(Extension::KeyShareRetry(g));
    }
    if let Some(c) = cookie {
        exts.push(Extension::Cookie(c));
    }
    ServerHello {
        legacy_version: legacy_version(protocol),
        random: HRR_RANDOM,
        session_id: session_id_echo.to_vec(),
        cipher_suite: suite,
        compression_method: 0,
        extensions: exts,
    }
}

pub fn build_encrypted_extensions(early_data: bool, connection_id: Option<Vec<u8>>, sni_ack: bool) -> HandshakeMessage {
    let mut exts = Vec::new();
    if sni_ack {
        exts.push(Extension::Unknown { ext_type: ext_type::SERVER_NAME, data: Vec::new() });
    }
    if let Some(cid) = connection_id {
        exts.push(Extension::ConnectionId(cid));
    }
    if early_data {
        exts.push(Extension::EarlyData);
    }
    HandshakeMessage::EncryptedExtensions(exts)
}

pub fn build_certificate_request(schemes: &[SignatureScheme]) -> HandshakeMessage {
    HandshakeMessage::CertificateRequest(CertificateRequest {
        context: Vec::new(),
        extensions: vec![Extension::SignatureAlgorithms(schemes.to_vec())],
    })
}

pub fn build_certificate(credential: Option<&Credential>) -> Result<HandshakeMessage, Error> {
    match credential {
        Some(Credential::Certificate { cert_der, .. }) => Ok(HandshakeMessage::Certificate(CertificatePayload {
            context: Vec::new(),
            entries: vec![CertificateEntry { data: cert_der.clone(), extensions: Vec::new() }],
        })),
        _ => Err(Error::MissingCredential),
    }
}

pub fn build_certificate_verify(
    credential: Option<&Credential>,
    server: bool,
    transcript_hash: &[u8],
) -> Result<HandshakeMessage, Error> {
    let Some(Credential::Certificate { private_key, .. }) = credential else {
        return Err(Error::MissingCredential);
    };
    let scheme = SignatureScheme::for_curve(private_key.curve());
    let signature = sign(private_key, scheme, &certificate_verify_content(server, transcript_hash))?;
    Ok(HandshakeMessage::CertificateVerify(CertificateVerify { scheme, signature }))
}

pub fn verify_certificate_verify(
    public_key: &[u8],
    cv: &CertificateVerify,
    server: bool,
    transcript_hash: &[u8],
) -> bool {
    verify(public_key, cv.scheme, &certificate_verify_content(server, transcript_hash), &cv.signature)
}

pub fn build_finished(mac: Vec<u8>) -> HandshakeMessage {
    HandshakeMessage::Finished(mac)
}

pub fn build_new_session_ticket(
    lifetime_secs: u32,
    age_add: u32,
    nonce: Vec<u8>,
    ticket: Vec<u8>,
    max_early_data: Option<u32>,
) -> HandshakeMessage {
    HandshakeMessage::NewSessionTicket(NewSessionTicket {
        lifetime: lifetime_secs,
        age_add,
        nonce,
        ticket,
        extensions: max_early_data.map(Extension::EarlyDataMax).into_iter().collect(),
    })
}

/// Synthetic `message_hash` handshake message for a ClientHello digest.
pub fn build_message_hash(hash: HashAlg, client_hello_tls_form: &[u8]) -> HandshakeMessage {
    HandshakeMessage::MessageHash(hash.hash(client_hello_tls_form))
}
