use aes::cipher::BlockEncrypt;
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use ccm::consts::{U12, U16};
use ccm::Ccm;

use super::suite::{AeadAlg, SuiteParams};
use crate::error::Error;

type Aes128Ccm = Ccm<aes::Aes128, U16, U12>;
type Aes256Ccm = Ccm<aes::Aes256, U16, U12>;

fn check_lengths(suite: &SuiteParams, key: &[u8], nonce: &[u8]) -> Result<(), Error> {
    if key.len() != suite.key_len || nonce.len() != suite.iv_len {
        return Err(Error::InvalidKeyLength);
    }
    Ok(())
}

pub fn aead_seal(
    suite: &SuiteParams,
    key: &[u8],
    nonce: &[u8],
    aad: &[u8],
    plaintext: &[u8],
) -> Result<Vec<u8>, Error> {
    check_lengths(suite, key, nonce)?;
    let payload = Payload { msg: plaintext, aad };
    let out = match suite.aead_alg {
        AeadAlg::Aes128Ccm => {
            Aes128Ccm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.encrypt(nonce.into(), payload)
        }
        AeadAlg::Aes256Ccm => {
            Aes256Ccm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.encrypt(nonce.into(), payload)
        }
        AeadAlg::Aes256Gcm => {
            Aes256Gcm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.encrypt(nonce.into(), payload)
        }
    };
    out.map_err(|_| Error::RecordOverflow)
}

pub fn aead_open(
    suite: &SuiteParams,
    key: &[u8],
    nonce: &[u8],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, Error> {
    check_lengths(suite, key, nonce)?;
    if ciphertext.len() < suite.tag_len {
        return Err(Error::AuthenticationFailure);
    }
    let payload = Payload { msg: ciphertext, aad };
    let out = match suite.aead_alg {
        AeadAlg::Aes128Ccm => {
            Aes128Ccm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.decrypt(nonce.into(), payload)
        }
        AeadAlg::Aes256Ccm => {
            Aes256Ccm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.decrypt(nonce.into(), payload)
        }
        AeadAlg::Aes256Gcm => {
            Aes256Gcm::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.decrypt(nonce.into(), payload)
        }
    };
    out.map_err(|_| Error::AuthenticationFailure)
}

/// One raw AES block encryption, used for DTLS record sequence-number masks.
pub fn aes_block(suite: &SuiteParams, key: &[u8], block: &[u8; 16]) -> Result<[u8; 16], Error> {
    let mut b = aes::Block::from(*block);
    match key.len() {
        16 if suite.key_len == 16 => {
            aes::Aes128::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.encrypt_block(&mut b)
        }
        32 if suite.key_len == 32 => {
            aes::Aes256::new_from_slice(key).map_err(|_| Error::InvalidKeyLength)?.encrypt_block(&mut b)
        }
        _ => return Err(Error::InvalidKeyLength),
    }
    Ok(b.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{suite_params, SuiteId};

    #[test]
    fn empty_plaintext_is_tag_only() {
        for id in SuiteId::ALL {
            let p = suite_params(id).unwrap();
            let key = vec![1u8; p.key_len];
            let ct = aead_seal(&p, &key, &[0u8; 12], b"hdr", b"").unwrap();
            assert_eq!(ct.len(), p.tag_len);
            assert!(aead_open(&p, &key, &[0u8; 12], b"hdr", &ct).unwrap().is_empty());
        }
    }

    #[test]
    fn aad_flip_fails() {
        let p = suite_params(SuiteId::AES_128_CCM_SHA256).unwrap();
        let key = [9u8; 16];
        let ct = aead_seal(&p, &key, &[5u8; 12], b"header", b"payload").unwrap();
        assert_eq!(aead_open(&p, &key, &[5u8; 12], b"headeR", &ct), Err(Error::AuthenticationFailure));
    }

    #[test]
    fn wrong_key_length() {
        let p = suite_params(SuiteId::AES_256_GCM_SHA384).unwrap();
        assert_eq!(aead_seal(&p, &[0u8; 16], &[0u8; 12], b"", b"x"), Err(Error::InvalidKeyLength));
    }

    #[test]
    fn aes_block_fips197() {
        // FIPS-197 appendix C.1
        let p = suite_params(SuiteId::AES_128_CCM_SHA256).unwrap();
        let key: Vec<u8> = (0u8..16).collect();
        let pt: [u8; 16] = hex::decode("00112233445566778899aabbccddeeff").unwrap().try_into().unwrap();
        let ct = aes_block(&p, &key, &pt).unwrap();
        assert_eq!(hex::encode(ct), "69c4e0d86a7b0430d8cdb78070b4c55a");
    }
}
