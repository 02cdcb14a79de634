use crate::codec::{Reader, WriteExt};
use crate::crypto::{sign, verify, Curve, EcPrivateKey, HashAlg, NamedGroup, SignatureScheme};
use crate::error::{DecodeError, Error};

/// Authentication material of one endpoint.
///
/// Certificates are opaque DER-looking blobs of a configurable size; the
/// matching public key travels alongside so no ASN.1 parsing is needed.
#[derive(Clone, Debug)]
pub enum Credential {
    Psk { identity: Vec<u8>, secret: Vec<u8> },
    Certificate { cert_der: Vec<u8>, public_key: Vec<u8>, private_key: EcPrivateKey },
}

impl Credential {
    pub fn psk(identity: &[u8], secret: &[u8]) -> Self {
        Credential::Psk { identity: identity.to_vec(), secret: secret.to_vec() }
    }

    /// Builds a certificate credential around a self-signed synthetic blob
    /// of exactly `cert_size` bytes.
    pub fn synthetic_certificate(private_key: EcPrivateKey, cert_size: usize) -> Result<Self, Error> {
        let public_key = private_key.public_key();
        let cert_der = synthetic_der(&private_key, cert_size)?;
        Ok(Credential::Certificate { cert_der, public_key, private_key })
    }

    pub fn is_psk(&self) -> bool {
        matches!(self, Credential::Psk { .. })
    }

    pub fn curve(&self) -> Option<Curve> {
        match self {
            Credential::Certificate { private_key, .. } => Some(private_key.curve()),
            Credential::Psk { .. } => None,
        }
    }

    pub fn signature_scheme(&self) -> Option<SignatureScheme> {
        self.curve().map(SignatureScheme::for_curve)
    }
}

fn max_signature_len(curve: Curve) -> usize {
    // DER SEQUENCE of two INTEGERs, each possibly one byte longer than the field
    match curve {
        Curve::P256 => 2 + 2 * (2 + 33),
        Curve::P521 => 3 + 2 * (2 + 66),
    }
}

/// Smallest blob `synthetic_der` can produce for a curve.
pub fn min_certificate_size(curve: Curve) -> usize {
    let pk = 2 * curve.field_len() + 1;
    4 + 2 + pk + max_signature_len(curve) + 1
}

/// Layout: `30 82 <len16> | group(2) | public key | filler | signature
/// padded to its maximum DER length | actual signature length(1)`. The
/// signature covers everything before it.
fn synthetic_der(key: &EcPrivateKey, size: usize) -> Result<Vec<u8>, Error> {
    let curve = key.curve();
    if size < min_certificate_size(curve) || size > 0xffff + 4 {
        return Err(Error::Config(format!(
            "certificate size {size} outside {}..=65539 for {curve:?}",
            min_certificate_size(curve)
        )));
    }
    let public_key = key.public_key();
    let sig_field = max_signature_len(curve);
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&[0x30, 0x82]);
    out.put_u16((size - 4) as u16);
    out.put_u16(NamedGroup::for_curve(curve).0);
    out.extend_from_slice(&public_key);
    let signed_len = size - sig_field - 1;
    let mut counter = 0u32;
    while out.len() < signed_len {
        let mut seed = public_key.clone();
        seed.extend_from_slice(&counter.to_be_bytes());
        let block = HashAlg::Sha256.hash(&seed);
        let take = (signed_len - out.len()).min(block.len());
        out.extend_from_slice(&block[..take]);
        counter += 1;
    }
    let sig = sign(key, SignatureScheme::for_curve(curve), &out)?;
    let sig_len = sig.len();
    out.extend_from_slice(&sig);
    out.resize(size - 1, 0);
    out.push(sig_len as u8);
    Ok(out)
}

/// Checks the self-signature of a synthetic certificate and returns the
/// embedded signature scheme and public key.
pub fn verify_synthetic_certificate(cert: &[u8]) -> Result<(SignatureScheme, Vec<u8>), Error> {
    let bad = || Error::Decode(DecodeError::InvalidValue("certificate"));
    let mut r = Reader::new(cert);
    if r.take(2)? != [0x30, 0x82] || r.u16()? as usize != cert.len().saturating_sub(4) {
        return Err(bad());
    }
    let group = NamedGroup(r.u16()?);
    let curve = group.curve().map_err(|_| bad())?;
    let public_key = r.take(2 * curve.field_len() + 1)?.to_vec();
    let sig_field = max_signature_len(curve);
    let sig_len = *cert.last().ok_or_else(bad)? as usize;
    if cert.len() < min_certificate_size(curve) || sig_len > sig_field {
        return Err(bad());
    }
    let signed_len = cert.len() - sig_field - 1;
    let scheme = SignatureScheme::for_curve(curve);
    let sig = &cert[signed_len..signed_len + sig_len];
    if !verify(&public_key, scheme, &cert[..signed_len], sig) {
        return Err(Error::BadSignature);
    }
    Ok((scheme, public_key))
}

/// Input signed by CertificateVerify: 64 spaces, the role-specific context
/// string, a zero byte, then the transcript hash.
pub fn certificate_verify_content(server: bool, transcript_hash: &[u8]) -> Vec<u8> {
    let context: &[u8] =
        if server { b"TLS 1.3, server CertificateVerify" } else { b"TLS 1.3, client CertificateVerify" };
    let mut out = vec![0x20u8; 64];
    out.extend_from_slice(context);
    out.push(0);
    out.extend_from_slice(transcript_hash);
    out
}
