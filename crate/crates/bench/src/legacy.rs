//! Byte model of the equivalent TLS/DTLS 1.2 handshake.
//!
//! Nothing here runs 1.2 cryptography: each message is a sum of field
//! widths from [`crate::legacy12`], with the certificate size, PSK identity,
//! server name and group/suite lists taken from the same profile as the live
//! 1.3 run. Every handshake message travels in its own record.

use serde::{Deserialize, Serialize};

use tls13_iot::crypto::Curve;
use tls13_iot::profiles::DEFAULT_PSK_IDENTITY;
use tls13_iot::sim_net::Direction;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

use crate::legacy12::*;
use crate::scenario::Scenario;
use crate::BenchError;

/// 1.2 key exchange standing in for a 1.3 mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyExchange12 {
    Psk,
    EcdhePsk,
    EcdheEcdsa,
}

impl KeyExchange12 {
    /// 1.2 has no 0-RTT; it is modelled as its plain-PSK handshake.
    pub fn for_mode(mode: AuthMode) -> Self {
        match mode {
            AuthMode::Psk | AuthMode::ZeroRtt => KeyExchange12::Psk,
            AuthMode::PskEcdhe => KeyExchange12::EcdhePsk,
            AuthMode::PkMutual | AuthMode::PkServerOnly => KeyExchange12::EcdheEcdsa,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegacySizeModel {
    pub protocol: Protocol,
    pub kx: KeyExchange12,
    pub curve: Option<Curve>,
    pub cert_size: usize,
    pub mutual: bool,
    pub psk_identity_len: usize,
    pub server_name_len: Option<usize>,
    pub suites_offered: usize,
    pub groups_offered: usize,
    /// DTLS cookie exchange (HelloVerifyRequest) before the real handshake.
    pub hello_verify: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegacyMessage {
    pub name: &'static str,
    pub direction: Direction,
    pub bytes: usize,
}

impl LegacySizeModel {
    pub fn for_scenario(s: &Scenario) -> Result<Self, BenchError> {
        let profile = s.resolved_profile()?;
        let suite = s.effective_suite()?;
        let kx = KeyExchange12::for_mode(s.mode);
        let curve = match kx {
            KeyExchange12::Psk => None,
            _ => Some(profile.curve_for(suite)?),
        };
        Ok(LegacySizeModel {
            protocol: s.protocol,
            kx,
            curve,
            cert_size: profile.cert_size,
            mutual: s.mode == AuthMode::PkMutual,
            psk_identity_len: DEFAULT_PSK_IDENTITY.len(),
            server_name_len: profile.sni_hostname.as_ref().filter(|_| s.mode.uses_certificates()).map(String::len),
            suites_offered: profile.suites.len(),
            groups_offered: profile.groups.len().max(1),
            hello_verify: s.protocol == Protocol::Dtls,
        })
    }

    fn record_header(&self) -> usize {
        match self.protocol {
            Protocol::Tls => TLS_RECORD_HEADER,
            Protocol::Dtls => DTLS_RECORD_HEADER,
        }
    }

    fn hs_header(&self) -> usize {
        match self.protocol {
            Protocol::Tls => TLS_HS_HEADER,
            Protocol::Dtls => DTLS_HS_HEADER,
        }
    }

    fn plain(&self, body: usize) -> usize {
        self.record_header() + self.hs_header() + body
    }

    fn protected(&self, body: usize) -> usize {
        self.record_header() + AEAD_EXPANSION + self.hs_header() + body
    }

    fn point(&self) -> usize {
        match self.curve {
            Some(Curve::P521) => P521_POINT,
            _ => P256_POINT,
        }
    }

    fn signature(&self) -> usize {
        match self.curve {
            Some(Curve::P521) => P521_SIGNATURE,
            _ => P256_SIGNATURE,
        }
    }

    fn client_hello(&self, cookie: usize) -> usize {
        let mut body = CLIENT_HELLO_FIXED + CIPHER_SUITE * self.suites_offered + EXT_EMS;
        if self.protocol == Protocol::Dtls {
            body += CLIENT_HELLO_COOKIE_LEN + cookie;
        }
        if self.kx != KeyExchange12::Psk {
            body += EXT_LIST_FIXED + 2 * self.groups_offered + EXT_POINT_FORMATS;
        }
        if self.kx == KeyExchange12::EcdheEcdsa {
            body += EXT_LIST_FIXED + 2 * self.groups_offered;
            body += self.server_name_len.map_or(0, |n| EXT_SNI_FIXED + n);
        }
        self.plain(body)
    }

    fn server_hello(&self) -> usize {
        let mut body = SERVER_HELLO_FIXED + EXT_EMS;
        if self.kx != KeyExchange12::Psk {
            body += EXT_POINT_FORMATS;
        }
        self.plain(body)
    }

    fn certificate(&self) -> usize {
        self.plain(CERTIFICATE_FIXED + self.cert_size)
    }

    pub fn messages(&self) -> Vec<LegacyMessage> {
        use Direction::{C2s, S2c};
        let mut out = Vec::new();
        let mut push = |name, direction, bytes| out.push(LegacyMessage { name, direction, bytes });

        if self.hello_verify && self.protocol == Protocol::Dtls {
            push("ClientHello", C2s, self.client_hello(0));
            push("HelloVerifyRequest", S2c, self.plain(HELLO_VERIFY_FIXED + COOKIE));
            push("ClientHello", C2s, self.client_hello(COOKIE));
        } else {
            push("ClientHello", C2s, self.client_hello(0));
        }

        push("ServerHello", S2c, self.server_hello());
        match self.kx {
            KeyExchange12::Psk => {}
            KeyExchange12::EcdhePsk => {
                push("ServerKeyExchange", S2c, self.plain(PSK_HINT + ECDH_PARAMS_FIXED + self.point()));
            }
            KeyExchange12::EcdheEcdsa => {
                push("Certificate", S2c, self.certificate());
                let ske = ECDH_PARAMS_FIXED + self.point() + DIGITALLY_SIGNED_FIXED + self.signature();
                push("ServerKeyExchange", S2c, self.plain(ske));
                if self.mutual {
                    push("CertificateRequest", S2c, self.plain(CERTIFICATE_REQUEST_FIXED + 2 * self.groups_offered));
                }
            }
        }
        push("ServerHelloDone", S2c, self.plain(SERVER_HELLO_DONE));

        if self.kx == KeyExchange12::EcdheEcdsa && self.mutual {
            push("Certificate", C2s, self.certificate());
        }
        let cke = match self.kx {
            KeyExchange12::Psk => PSK_IDENTITY_LEN + self.psk_identity_len,
            KeyExchange12::EcdhePsk => PSK_IDENTITY_LEN + self.psk_identity_len + ECDH_POINT_LEN + self.point(),
            KeyExchange12::EcdheEcdsa => ECDH_POINT_LEN + self.point(),
        };
        push("ClientKeyExchange", C2s, self.plain(cke));
        if self.kx == KeyExchange12::EcdheEcdsa && self.mutual {
            push("CertificateVerify", C2s, self.plain(DIGITALLY_SIGNED_FIXED + self.signature()));
        }
        push("ChangeCipherSpec", C2s, self.record_header() + CHANGE_CIPHER_SPEC);
        push("Finished", C2s, self.protected(FINISHED));
        push("ChangeCipherSpec", S2c, self.record_header() + CHANGE_CIPHER_SPEC);
        push("Finished", S2c, self.protected(FINISHED));
        out
    }

    pub fn total(&self) -> usize {
        self.messages().iter().map(|m| m.bytes).sum()
    }
}

/// Modelled 1.2 handshake size for the scenario's profile and protocol.
pub fn legacy12_total(s: &Scenario) -> Result<usize, BenchError> {
    Ok(LegacySizeModel::for_scenario(s)?.total())
}
