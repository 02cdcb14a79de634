use rand::{CryptoRng, RngCore};
use zeroize::Zeroizing;

use crate::crypto::{HashAlg, NamedGroup};
use crate::sim_net::Addr;

const MAC_LEN: usize = 32;

/// Stateless HelloRetryRequest cookie key with one step of rotation history.
///
/// Cookie: `rotation(1) | group(2) | Hash(CH1) | HMAC-SHA-256(key, addr |
/// group | Hash(CH1))`. The group and ClientHello hash ride along so the
/// server can rebuild the transcript without keeping state.
#[derive(Clone)]
pub struct CookieSecret {
    key: Zeroizing<[u8; 32]>,
    previous: Option<Zeroizing<[u8; 32]>>,
    rotation_epoch: u8,
}

impl std::fmt::Debug for CookieSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CookieSecret").field("rotation_epoch", &self.rotation_epoch).finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CookieContents {
    /// Group the HRR asked for, if any.
    pub group: Option<NamedGroup>,
    pub client_hello_hash: Vec<u8>,
}

impl CookieSecret {
    pub fn generate(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        let mut key = Zeroizing::new([0u8; 32]);
        rng.fill_bytes(key.as_mut());
        CookieSecret { key, previous: None, rotation_epoch: 0 }
    }

    pub fn rotation_epoch(&self) -> u8 {
        self.rotation_epoch
    }

    pub fn rotate(&mut self, rng: &mut (impl RngCore + CryptoRng)) {
        let mut next = Zeroizing::new([0u8; 32]);
        rng.fill_bytes(next.as_mut());
        self.previous = Some(std::mem::replace(&mut self.key, next));
        self.rotation_epoch = self.rotation_epoch.wrapping_add(1);
    }

    fn mac(key: &[u8], addr: Addr, group: u16, ch_hash: &[u8]) -> Vec<u8> {
        let mut input = addr.to_bytes().to_vec();
        input.extend_from_slice(&group.to_be_bytes());
        input.extend_from_slice(ch_hash);
        HashAlg::Sha256.hmac(key, &input)
    }

    pub fn mint(&self, addr: Addr, group: Option<NamedGroup>, client_hello_hash: &[u8]) -> Vec<u8> {
        let g = group.map_or(0, |g| g.0);
        let mut out = vec![self.rotation_epoch];
        out.extend_from_slice(&g.to_be_bytes());
        out.extend_from_slice(client_hello_hash);
        out.extend(Self::mac(self.key.as_ref(), addr, g, client_hello_hash));
        out
    }

    /// Accepts cookies minted under the current key or its predecessor.
    pub fn verify(&self, addr: Addr, cookie: &[u8]) -> Option<CookieContents> {
        if cookie.len() < 3 + 32 + MAC_LEN {
            return None;
        }
        let rotation = cookie[0];
        let key: &[u8; 32] = if rotation == self.rotation_epoch {
            &self.key
        } else if rotation == self.rotation_epoch.wrapping_sub(1) {
            self.previous.as_deref()?
        } else {
            return None;
        };
        let g = u16::from_be_bytes([cookie[1], cookie[2]]);
        let (ch_hash, tag) = cookie[3..].split_at(cookie.len() - 3 - MAC_LEN);
        let mut input = addr.to_bytes().to_vec();
        input.extend_from_slice(&g.to_be_bytes());
        input.extend_from_slice(ch_hash);
        if !HashAlg::Sha256.hmac_verify(key, &input, tag) {
            return None;
        }
        Some(CookieContents { group: (g != 0).then_some(NamedGroup(g)), client_hello_hash: ch_hash.to_vec() })
    }
}
