use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha384, Sha512};

use crate::error::Error;
use crate::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HashAlg {
    Sha256,
    Sha384,
    Sha512,
}

impl HashAlg {
    pub fn output_len(self) -> usize {
        match self {
            HashAlg::Sha256 => 32,
            HashAlg::Sha384 => 48,
            HashAlg::Sha512 => 64,
        }
    }

    pub fn block_len(self) -> usize {
        match self {
            HashAlg::Sha256 => 64,
            HashAlg::Sha384 | HashAlg::Sha512 => 128,
        }
    }

    /// Compression-function invocations needed to hash `len` bytes.
    pub fn blocks_for(self, len: usize) -> u64 {
        // Length field is 8 bytes for SHA-256, 16 for the 512-bit family.
        let trailer = if self.block_len() == 64 { 9 } else { 17 };
        (len + trailer).div_ceil(self.block_len()) as u64
    }

    pub fn hash(self, data: &[u8]) -> Vec<u8> {
        match self {
            HashAlg::Sha256 => Sha256::digest(data).to_vec(),
            HashAlg::Sha384 => Sha384::digest(data).to_vec(),
            HashAlg::Sha512 => Sha512::digest(data).to_vec(),
        }
    }

    pub fn hmac(self, key: &[u8], data: &[u8]) -> Vec<u8> {
        fn run<M: Mac + hmac::digest::KeyInit>(key: &[u8], data: &[u8]) -> Vec<u8> {
            let mut mac = <M as hmac::digest::KeyInit>::new_from_slice(key).expect("HMAC accepts keys of any length");
            mac.update(data);
            mac.finalize().into_bytes().to_vec()
        }
        match self {
            HashAlg::Sha256 => run::<Hmac<Sha256>>(key, data),
            HashAlg::Sha384 => run::<Hmac<Sha384>>(key, data),
            HashAlg::Sha512 => run::<Hmac<Sha512>>(key, data),
        }
    }

    /// Constant-time tag comparison.
    pub fn hmac_verify(self, key: &[u8], data: &[u8], tag: &[u8]) -> bool {
        let expected = self.hmac(key, data);
        expected.len() == tag.len() && expected.iter().zip(tag).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

/// HKDF-Extract. An empty salt behaves as `hash_len` zero bytes.
pub fn hkdf_extract(hash: HashAlg, salt: &[u8], ikm: &[u8]) -> Vec<u8> {
    match hash {
        HashAlg::Sha256 => Hkdf::<Sha256>::extract(Some(salt), ikm).0.to_vec(),
        HashAlg::Sha384 => Hkdf::<Sha384>::extract(Some(salt), ikm).0.to_vec(),
        HashAlg::Sha512 => Hkdf::<Sha512>::extract(Some(salt), ikm).0.to_vec(),
    }
}

/// HKDF-Expand.
pub fn hkdf_expand(hash: HashAlg, prk: &[u8], info: &[u8], out_len: usize) -> Result<Vec<u8>, Error> {
    if out_len > 255 * hash.output_len() {
        return Err(Error::LengthOverflow(out_len));
    }
    let mut okm = vec![0u8; out_len];
    if out_len == 0 {
        return Ok(okm);
    }
    let res = match hash {
        HashAlg::Sha256 => Hkdf::<Sha256>::from_prk(prk).map(|h| h.expand(info, &mut okm)),
        HashAlg::Sha384 => Hkdf::<Sha384>::from_prk(prk).map(|h| h.expand(info, &mut okm)),
        HashAlg::Sha512 => Hkdf::<Sha512>::from_prk(prk).map(|h| h.expand(info, &mut okm)),
    };
    match res {
        Ok(Ok(())) => Ok(okm),
        Ok(Err(_)) => Err(Error::LengthOverflow(out_len)),
        Err(_) => Err(Error::InvalidKeyLength),
    }
}

pub fn label_prefix(protocol: Protocol) -> &'static [u8] {
    match protocol {
        Protocol::Tls => b"tls13 ",
        Protocol::Dtls => b"dtls13",
    }
}

/// Serialized HkdfLabel structure.
pub fn hkdf_label(out_len: usize, label: &[u8], context: &[u8], protocol: Protocol) -> Result<Vec<u8>, Error> {
    let prefix = label_prefix(protocol);
    let full_len = prefix.len() + label.len();
    if full_len > 255 || context.len() > 255 || out_len > u16::MAX as usize {
        return Err(Error::LengthOverflow(out_len.max(full_len)));
    }
    let mut info = Vec::with_capacity(4 + full_len + context.len());
    info.extend_from_slice(&(out_len as u16).to_be_bytes());
    info.push(full_len as u8);
    info.extend_from_slice(prefix);
    info.extend_from_slice(label);
    info.push(context.len() as u8);
    info.extend_from_slice(context);
    Ok(info)
}

pub fn hkdf_expand_label(
    hash: HashAlg,
    prk: &[u8],
    label: &str,
    context: &[u8],
    out_len: usize,
    protocol: Protocol,
) -> Result<Vec<u8>, Error> {
    if out_len > 255 * hash.output_len() {
        return Err(Error::LengthOverflow(out_len));
    }
    let info = hkdf_label(out_len, label.as_bytes(), context, protocol)?;
    hkdf_expand(hash, prk, &info, out_len)
}

/// expand_label(secret, label, Hash(messages), hash_len)
pub fn derive_secret(
    hash: HashAlg,
    secret: &[u8],
    label: &str,
    transcript_hash: &[u8],
    protocol: Protocol,
) -> Result<Vec<u8>, Error> {
    hkdf_expand_label(hash, secret, label, transcript_hash, hash.output_len(), protocol)
}

#[derive(Clone)]
enum HashState {
    Sha256(Sha256),
    Sha384(Sha384),
    Sha512(Sha512),
}

/// Running hash over handshake messages in their 4-byte-header form.
#[derive(Clone)]
pub struct Transcript {
    alg: HashAlg,
    state: HashState,
    len: usize,
}

impl Transcript {
    pub fn new(alg: HashAlg) -> Self {
        let state = match alg {
            HashAlg::Sha256 => HashState::Sha256(Sha256::new()),
            HashAlg::Sha384 => HashState::Sha384(Sha384::new()),
            HashAlg::Sha512 => HashState::Sha512(Sha512::new()),
        };
        Transcript { alg, state, len: 0 }
    }

    pub fn alg(&self) -> HashAlg {
        self.alg
    }

    /// Bytes absorbed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn update(&mut self, data: &[u8]) {
        self.len += data.len();
        match &mut self.state {
            HashState::Sha256(h) => h.update(data),
            HashState::Sha384(h) => h.update(data),
            HashState::Sha512(h) => h.update(data),
        }
    }

    pub fn current(&self) -> Vec<u8> {
        match self.state.clone() {
            HashState::Sha256(h) => h.finalize().to_vec(),
            HashState::Sha384(h) => h.finalize().to_vec(),
            HashState::Sha512(h) => h.finalize().to_vec(),
        }
    }

    /// Hash of the transcript followed by `extra`, without absorbing it.
    pub fn current_with(&self, extra: &[u8]) -> Vec<u8> {
        let mut t = self.clone();
        t.update(extra);
        t.current()
    }

    /// Replaces the transcript by the synthetic `message_hash` message that
    /// stands in for the first ClientHello after a HelloRetryRequest.
    pub fn replace_with_message_hash(&mut self) {
        let digest = self.current();
        *self = Transcript::new(self.alg);
        self.update(&message_hash_message(&digest));
    }
}

/// `254 ‖ uint24(len) ‖ digest`
pub fn message_hash_message(digest: &[u8]) -> Vec<u8> {
    let mut m = vec![254u8, 0, 0, digest.len() as u8];
    m.extend_from_slice(digest);
    m
}

/// One-shot hash over the concatenation of full handshake messages.
pub fn transcript_hash<'a>(hash: HashAlg, messages: impl IntoIterator<Item = &'a [u8]>) -> Vec<u8> {
    let mut t = Transcript::new(hash);
    for m in messages {
        t.update(m);
    }
    t.current()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_transcript_sha256() {
        assert_eq!(
            hex::encode(transcript_hash(HashAlg::Sha256, std::iter::empty())),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn incremental_matches_one_shot() {
        let ch = [1u8, 0, 0, 3, 9, 9, 9];
        let sh = [2u8, 0, 0, 2, 7, 7];
        let mut t = Transcript::new(HashAlg::Sha256);
        t.update(&ch);
        t.update(&sh);
        let joined = [&ch[..], &sh[..]].concat();
        assert_eq!(t.current(), HashAlg::Sha256.hash(&joined));
        assert_eq!(t.len(), joined.len());
    }

    #[test]
    fn expand_zero_length() {
        let prk = [7u8; 32];
        assert!(hkdf_expand_label(HashAlg::Sha256, &prk, "key", &[], 0, Protocol::Tls).unwrap().is_empty());
    }

    #[test]
    fn expand_length_overflow() {
        let prk = [7u8; 32];
        assert_eq!(hkdf_expand(HashAlg::Sha256, &prk, b"", 255 * 32 + 1), Err(Error::LengthOverflow(255 * 32 + 1)));
    }

    #[test]
    fn label_prefix_separates_protocols() {
        let prk = [3u8; 32];
        let a = hkdf_expand_label(HashAlg::Sha256, &prk, "key", b"ctx", 16, Protocol::Tls).unwrap();
        let b = hkdf_expand_label(HashAlg::Sha256, &prk, "key", b"ctx", 16, Protocol::Dtls).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn hash_block_count() {
        assert_eq!(HashAlg::Sha256.blocks_for(0), 1);
        assert_eq!(HashAlg::Sha256.blocks_for(55), 1);
        assert_eq!(HashAlg::Sha256.blocks_for(56), 2);
        assert_eq!(HashAlg::Sha384.blocks_for(111), 1);
        assert_eq!(HashAlg::Sha384.blocks_for(112), 2);
    }
}
