use p256::ecdsa::signature::{Signer, Verifier};
use rand::{CryptoRng, RngCore};
use zeroize::Zeroizing;

use super::hash::HashAlg;
use super::suite::{Curve, NamedGroup, SignatureScheme};
use crate::error::Error;

/// Private scalar on one of the supported curves. Used both for ephemeral
/// key exchange and for long-term signing keys.
#[derive(Clone)]
pub enum EcPrivateKey {
    P256(p256::SecretKey),
    P521(p521::SecretKey),
}

impl std::fmt::Debug for EcPrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EcPrivateKey({:?})", self.curve())
    }
}

impl EcPrivateKey {
    pub fn generate(curve: Curve, rng: &mut (impl RngCore + CryptoRng)) -> Self {
        match curve {
            Curve::P256 => EcPrivateKey::P256(p256::SecretKey::random(rng)),
            Curve::P521 => EcPrivateKey::P521(p521::SecretKey::random(rng)),
        }
    }

    pub fn from_bytes(curve: Curve, bytes: &[u8]) -> Result<Self, Error> {
        match curve {
            Curve::P256 => {
                p256::SecretKey::from_slice(bytes).map(EcPrivateKey::P256).map_err(|_| Error::InvalidKeyLength)
            }
            Curve::P521 => {
                p521::SecretKey::from_slice(bytes).map(EcPrivateKey::P521).map_err(|_| Error::InvalidKeyLength)
            }
        }
    }

    pub fn to_bytes(&self) -> Zeroizing<Vec<u8>> {
        Zeroizing::new(match self {
            EcPrivateKey::P256(k) => k.to_bytes().to_vec(),
            EcPrivateKey::P521(k) => k.to_bytes().to_vec(),
        })
    }

    pub fn curve(&self) -> Curve {
        match self {
            EcPrivateKey::P256(_) => Curve::P256,
            EcPrivateKey::P521(_) => Curve::P521,
        }
    }

    /// Uncompressed SEC1 encoding of the public point.
    pub fn public_key(&self) -> Vec<u8> {
        use p256::elliptic_curve::sec1::ToEncodedPoint;
        match self {
            EcPrivateKey::P256(k) => k.public_key().to_encoded_point(false).as_bytes().to_vec(),
            EcPrivateKey::P521(k) => k.public_key().to_encoded_point(false).as_bytes().to_vec(),
        }
    }
}

pub fn ecdhe_keypair(
    group: NamedGroup,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<(EcPrivateKey, Vec<u8>), Error> {
    let key = EcPrivateKey::generate(group.curve()?, rng);
    let public = key.public_key();
    Ok((key, public))
}

/// x-coordinate of the shared point, `field_len` bytes.
pub fn ecdhe_shared(private: &EcPrivateKey, peer_public: &[u8]) -> Result<Zeroizing<Vec<u8>>, Error> {
    match private {
        EcPrivateKey::P256(k) => {
            let peer = p256::PublicKey::from_sec1_bytes(peer_public).map_err(|_| Error::InvalidPoint)?;
            let shared = p256::ecdh::diffie_hellman(k.to_nonzero_scalar(), peer.as_affine());
            Ok(Zeroizing::new(shared.raw_secret_bytes().to_vec()))
        }
        EcPrivateKey::P521(k) => {
            let peer = p521::PublicKey::from_sec1_bytes(peer_public).map_err(|_| Error::InvalidPoint)?;
            let shared = p521::ecdh::diffie_hellman(k.to_nonzero_scalar(), peer.as_affine());
            Ok(Zeroizing::new(shared.raw_secret_bytes().to_vec()))
        }
    }
}

/// Deterministic (RFC 6979) ECDSA, DER-encoded.
pub fn sign(key: &EcPrivateKey, scheme: SignatureScheme, message: &[u8]) -> Result<Vec<u8>, Error> {
    if scheme.curve()? != key.curve() {
        return Err(Error::KeyMismatch);
    }
    match key {
        EcPrivateKey::P256(k) => {
            let sk = p256::ecdsa::SigningKey::from(k);
            let sig: p256::ecdsa::Signature = sk.sign(message);
            Ok(sig.to_der().as_bytes().to_vec())
        }
        EcPrivateKey::P521(k) => {
            let z = HashAlg::Sha512.hash(message);
            let k_nonce = rfc6979_k_p521(&k.to_bytes(), &z)?;
            let d = k.to_nonzero_scalar();
            let field = ecdsa::hazmat::bits2field::<p521::NistP521>(&z).map_err(|_| Error::InvalidKeyLength)?;
            let (sig, _) = ecdsa::hazmat::sign_prehashed::<p521::NistP521, _>(d.as_ref(), k_nonce, &field)
                .map_err(|_| Error::InvalidKeyLength)?;
            Ok(sig.to_der().as_bytes().to_vec())
        }
    }
}

/// RFC 6979 nonce for P-521 with HMAC-SHA-512. The `rfc6979` crate
/// requires the digest width to equal the field width, which P-521 with
/// SHA-512 does not satisfy (66 vs 64 bytes).
fn rfc6979_k_p521(x: &[u8], h1: &[u8]) -> Result<p521::Scalar, Error> {
    use p521::elliptic_curve::PrimeField;
    const RLEN: usize = 66;
    let hmac = |key: &[u8], parts: &[&[u8]]| HashAlg::Sha512.hmac(key, &parts.concat());
    // h1 is 512 bits < qlen, so bits2octets(h1) is h1 left-padded to rlen
    let mut h = vec![0u8; RLEN - h1.len()];
    h.extend_from_slice(h1);
    let mut v = vec![0x01u8; 64];
    let mut key = vec![0x00u8; 64];
    key = hmac(&key, &[&v[..], &[0x00], x, &h]);
    v = hmac(&key, &[&v]);
    key = hmac(&key, &[&v[..], &[0x01], x, &h]);
    v = hmac(&key, &[&v]);
    loop {
        let mut t = Vec::with_capacity(128);
        while t.len() * 8 < 521 {
            v = hmac(&key, &[&v]);
            t.extend_from_slice(&v);
        }
        // leftmost 521 bits: the first 66 bytes shifted right by 7
        let mut repr = [0u8; RLEN];
        let mut carry = 0u8;
        for (o, b) in repr.iter_mut().zip(&t[..RLEN]) {
            *o = (b >> 7) | carry;
            carry = b << 1;
        }
        let candidate = p521::Scalar::from_repr(*p521::FieldBytes::from_slice(&repr));
        if let Some(k) = Option::<p521::Scalar>::from(candidate) {
            if !bool::from(k.is_zero()) {
                return Ok(k);
            }
        }
        key = hmac(&key, &[&v[..], &[0x00]]);
        v = hmac(&key, &[&v]);
    }
}

/// Never errors: malformed keys or signatures simply fail verification.
pub fn verify(public: &[u8], scheme: SignatureScheme, message: &[u8], signature: &[u8]) -> bool {
    match scheme.curve() {
        Ok(Curve::P256) => {
            let Ok(vk) = p256::ecdsa::VerifyingKey::from_sec1_bytes(public) else {
                return false;
            };
            let Ok(sig) = p256::ecdsa::Signature::from_der(signature) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
        Ok(Curve::P521) => {
            let Ok(vk) = p521::ecdsa::VerifyingKey::from_sec1_bytes(public) else {
                return false;
            };
            let Ok(sig) = p521::ecdsa::Signature::from_der(signature) else {
                return false;
            };
            vk.verify(message, &sig).is_ok()
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn dh_symmetry_and_widths() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for (group, width) in [(NamedGroup::SECP256R1, 32), (NamedGroup::SECP521R1, 66)] {
            let (a, a_pub) = ecdhe_keypair(group, &mut rng).unwrap();
            let (b, b_pub) = ecdhe_keypair(group, &mut rng).unwrap();
            assert_eq!(a_pub.len(), group.pubkey_len().unwrap());
            let s1 = ecdhe_shared(&a, &b_pub).unwrap();
            let s2 = ecdhe_shared(&b, &a_pub).unwrap();
            assert_eq!(*s1, *s2);
            assert_eq!(s1.len(), width);
        }
    }

    #[test]
    fn zero_point_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (a, _) = ecdhe_keypair(NamedGroup::SECP256R1, &mut rng).unwrap();
        assert_eq!(ecdhe_shared(&a, &[0u8; 65]).unwrap_err(), Error::InvalidPoint);
    }

    #[test]
    fn deterministic_signatures() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for curve in [Curve::P256, Curve::P521] {
            let k = EcPrivateKey::generate(curve, &mut rng);
            let scheme = SignatureScheme::for_curve(curve);
            let s1 = sign(&k, scheme, b"message").unwrap();
            let s2 = sign(&k, scheme, b"message").unwrap();
            assert_eq!(s1, s2);
            assert!(verify(&k.public_key(), scheme, b"message", &s1));
            assert!(!verify(&k.public_key(), scheme, b"messagf", &s1));
        }
    }

    #[test]
    fn cross_curve_sign_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let k = EcPrivateKey::generate(Curve::P256, &mut rng);
        assert_eq!(sign(&k, SignatureScheme::ECDSA_SECP521R1_SHA512, b"m"), Err(Error::KeyMismatch));
    }
}
