//! Published bytes-over-the-air for six configurations, 1.2 and 1.3.

use serde::Serialize;

use tls13_iot::crypto::SuiteId;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Psk,
    EcdheEcdsa,
}

impl Family {
    pub fn for_mode(mode: AuthMode) -> Option<Family> {
        match mode {
            AuthMode::Psk => Some(Family::Psk),
            AuthMode::PkMutual | AuthMode::PkServerOnly => Some(Family::EcdheEcdsa),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub protocol: Protocol,
    pub family: Family,
    pub suite: SuiteId,
    pub v12_bytes: usize,
    pub v13_bytes: usize,
}

impl ReferenceRow {
    pub fn diff(&self) -> i64 {
        self.v13_bytes as i64 - self.v12_bytes as i64
    }

    /// 1.2 → 1.3 change as a percentage of the 1.2 value.
    pub fn change_pct(&self) -> f64 {
        100.0 * self.diff() as f64 / self.v12_bytes as f64
    }
}

const fn row(
    label: &'static str,
    protocol: Protocol,
    family: Family,
    suite: SuiteId,
    v12_bytes: usize,
    v13_bytes: usize,
) -> ReferenceRow {
    ReferenceRow { label, protocol, family, suite, v12_bytes, v13_bytes }
}

pub const REFERENCE_TABLE: [ReferenceRow; 6] = [
    row("TLS with PSK, AES-128-CCM", Protocol::Tls, Family::Psk, SuiteId::AES_128_CCM_SHA256, 337, 380),
    row(
        "TLS with ECDHE-ECDSA, AES-128-CCM",
        Protocol::Tls,
        Family::EcdheEcdsa,
        SuiteId::AES_128_CCM_SHA256,
        1308,
        1371,
    ),
    row(
        "TLS with ECDHE-ECDSA, AES-256-CCM",
        Protocol::Tls,
        Family::EcdheEcdsa,
        SuiteId::AES_256_CCM_SHA384,
        1454,
        1415,
    ),
    row("DTLS with PSK, AES-128-CCM", Protocol::Dtls, Family::Psk, SuiteId::AES_128_CCM_SHA256, 627, 467),
    row(
        "DTLS with ECDHE-ECDSA, AES-128-CCM",
        Protocol::Dtls,
        Family::EcdheEcdsa,
        SuiteId::AES_128_CCM_SHA256,
        1726,
        1500,
    ),
    row(
        "DTLS with ECDHE-ECDSA, AES-256-CCM",
        Protocol::Dtls,
        Family::EcdheEcdsa,
        SuiteId::AES_256_CCM_SHA384,
        1879,
        1542,
    ),
];

pub fn reference_row(protocol: Protocol, mode: AuthMode, suite: SuiteId) -> Option<&'static ReferenceRow> {
    let family = Family::for_mode(mode)?;
    REFERENCE_TABLE.iter().find(|r| r.protocol == protocol && r.family == family && r.suite == suite)
}

/// Signed deviation of `measured` from `reference`, in percent.
pub fn deviation_pct(measured: usize, reference: usize) -> f64 {
    100.0 * (measured as f64 - reference as f64) / reference as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diffs_match_the_published_column() {
        let diffs: Vec<i64> = REFERENCE_TABLE.iter().map(ReferenceRow::diff).collect();
        assert_eq!(diffs, [43, 63, -39, -160, -226, -337]);
    }

    #[test]
    fn every_dtls_row_shrinks() {
        assert!(REFERENCE_TABLE.iter().filter(|r| r.protocol == Protocol::Dtls).all(|r| r.diff() < 0));
    }

    #[test]
    fn lookup() {
        let r = reference_row(Protocol::Dtls, AuthMode::Psk, SuiteId::AES_128_CCM_SHA256).unwrap();
        assert_eq!(r.v13_bytes, 467);
        assert!(reference_row(Protocol::Dtls, AuthMode::PskEcdhe, SuiteId::AES_128_CCM_SHA256).is_none());
        assert!(reference_row(Protocol::Tls, AuthMode::Psk, SuiteId::AES_256_GCM_SHA384).is_none());
        assert!((deviation_pct(500, 467) - 7.066).abs() < 0.01);
    }
}
