//! AES-256 in two modes: counter mode keyed by `(epoch, physical index)` for
//! data blocks, and random-IV CBC for packed trie nodes and client state.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use aes::cipher::block_padding::Pkcs7;
use aes::cipher::{BlockDecryptMut, BlockEncryptMut, InnerIvInit, KeyInit, StreamCipher};
use aes::Aes256;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{CryptoError, Error, Result};

pub const KEY_LEN: usize = 32;
pub const IV_LEN: usize = 16;
const AES_BLOCK: usize = 16;

type Ctr = ctr::Ctr32BE<Aes256>;
type CbcEnc = cbc::Encryptor<Aes256>;
type CbcDec = cbc::Decryptor<Aes256>;

#[derive(Clone, PartialEq, Eq)]
pub struct CipherKey([u8; KEY_LEN]);

impl fmt::Debug for CipherKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CipherKey(..)")
    }
}

impl CipherKey {
    /// Fresh key from the operating system's CSPRNG.
    pub fn generate() -> Self {
        let mut k = [0u8; KEY_LEN];
        OsRng.fill_bytes(&mut k);
        CipherKey(k)
    }

    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        CipherKey(bytes)
    }

    /// Deterministic key for tests and seeded benchmarks.
    pub fn from_seed(seed: u64) -> Self {
        let mut k = [0u8; KEY_LEN];
        ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut k);
        CipherKey(k)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Reads a raw 32-byte key file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let arr: [u8; KEY_LEN] = bytes.as_slice().try_into().map_err(|_| {
            Error::InvalidGeometry(format!("key file must hold exactly {KEY_LEN} bytes, found {}", bytes.len()))
        })?;
        Ok(CipherKey(arr))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.0)?;
        Ok(())
    }
}

/// Counter-mode context. The 128-bit counter block is
/// `epoch (64, BE) || index (32, BE) || block counter (32, BE)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CtrContext {
    pub epoch: u64,
    pub index: u64,
}

impl CtrContext {
    pub fn new(epoch: u64, index: u64) -> Self {
        CtrContext { epoch, index }
    }

    fn counter_block(&self) -> [u8; 16] {
        assert!(self.index <= u32::MAX as u64, "physical index exceeds 32-bit counter field");
        let mut iv = [0u8; 16];
        iv[..8].copy_from_slice(&self.epoch.to_be_bytes());
        iv[8..12].copy_from_slice(&(self.index as u32).to_be_bytes());
        iv
    }
}

/// Length of an [`Cipher::iv_encrypt`] output for a plaintext of `len` bytes.
pub fn iv_blob_len(len: usize) -> usize {
    IV_LEN + (len / AES_BLOCK + 1) * AES_BLOCK
}

/// Largest plaintext whose IV blob fits in `capacity` bytes.
pub fn iv_max_plaintext(capacity: usize) -> Option<usize> {
    let body = capacity.checked_sub(IV_LEN)? / AES_BLOCK * AES_BLOCK;
    body.checked_sub(1)
}

pub struct Cipher {
    aes: Aes256,
    rng: Mutex<ChaCha20Rng>,
    seen: Option<Mutex<HashSet<CtrContext>>>,
}

impl fmt::Debug for Cipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cipher").field("reuse_check", &self.seen.is_some()).finish()
    }
}

impl Cipher {
    pub fn new(key: &CipherKey) -> Self {
        Cipher {
            aes: Aes256::new(&key.0.into()),
            rng: Mutex::new(ChaCha20Rng::from_rng(OsRng).expect("os rng")),
            seen: None,
        }
    }

    /// Makes every counter-mode encryption record its context and fail on repeats.
    pub fn with_reuse_check(mut self) -> Self {
        self.seen = Some(Mutex::new(HashSet::new()));
        self
    }

    /// Number of distinct contexts recorded by the reuse check.
    pub fn contexts_seen(&self) -> Option<usize> {
        self.seen.as_ref().map(|s| s.lock().expect("lock").len())
    }

    fn keystream_xor(&self, ctx: CtrContext, data: &mut [u8]) {
        let iv = ctx.counter_block();
        let mut ctr = Ctr::from_core(ctr::CtrCore::inner_iv_init(self.aes.clone(), &iv.into()));
        ctr.apply_keystream(data);
    }

    pub fn ctr_encrypt(&self, ctx: CtrContext, plaintext: &[u8]) -> std::result::Result<Vec<u8>, CryptoError> {
        if let Some(seen) = &self.seen {
            if !seen.lock().expect("lock").insert(ctx) {
                return Err(CryptoError::ContextReuse { epoch: ctx.epoch, index: ctx.index });
            }
        }
        let mut out = plaintext.to_vec();
        self.keystream_xor(ctx, &mut out);
        Ok(out)
    }

    pub fn ctr_decrypt(&self, ctx: CtrContext, ciphertext: &[u8]) -> Vec<u8> {
        let mut out = ciphertext.to_vec();
        self.keystream_xor(ctx, &mut out);
        out
    }

    pub fn ctr_decrypt_in_place(&self, ctx: CtrContext, data: &mut [u8]) {
        self.keystream_xor(ctx, data);
    }

    /// Random IV followed by CBC/PKCS7 ciphertext. Fails if the blob would
    /// exceed `capacity` bytes.
    pub fn iv_encrypt(&self, plaintext: &[u8], capacity: usize) -> std::result::Result<Vec<u8>, CryptoError> {
        let total = iv_blob_len(plaintext.len());
        if total > capacity {
            return Err(CryptoError::PayloadTooLarge { len: plaintext.len(), capacity });
        }
        let mut iv = [0u8; IV_LEN];
        self.rng.lock().expect("lock").fill_bytes(&mut iv);
        let mut out = vec![0u8; total];
        out[..IV_LEN].copy_from_slice(&iv);
        let enc = CbcEnc::inner_iv_init(self.aes.clone(), &iv.into());
        let written =
            enc.encrypt_padded_b2b_mut::<Pkcs7>(plaintext, &mut out[IV_LEN..]).expect("output sized for padding").len();
        debug_assert_eq!(written + IV_LEN, total);
        Ok(out)
    }

    pub fn iv_decrypt(&self, blob: &[u8]) -> std::result::Result<Vec<u8>, CryptoError> {
        if blob.len() < IV_LEN + AES_BLOCK || !(blob.len() - IV_LEN).is_multiple_of(AES_BLOCK) {
            return Err(CryptoError::MalformedPadding);
        }
        let iv: [u8; IV_LEN] = blob[..IV_LEN].try_into().expect("checked length");
        let dec = CbcDec::inner_iv_init(self.aes.clone(), &iv.into());
        let mut out = vec![0u8; blob.len() - IV_LEN];
        let len = dec
            .decrypt_padded_b2b_mut::<Pkcs7>(&blob[IV_LEN..], &mut out)
            .map_err(|_| CryptoError::MalformedPadding)?
            .len();
        out.truncate(len);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cipher() -> Cipher {
        Cipher::new(&CipherKey::from_seed(7))
    }

    #[test]
    fn ctr_round_trip_and_counter_separation() {
        let c = cipher();
        let x = vec![0u8; 64];
        let a = c.ctr_encrypt(CtrContext::new(0, 5), &x).unwrap();
        let b = c.ctr_encrypt(CtrContext::new(1, 5), &x).unwrap();
        let d = c.ctr_encrypt(CtrContext::new(0, 6), &x).unwrap();
        assert_ne!(a, b);
        assert_ne!(a, d);
        assert_eq!(c.ctr_decrypt(CtrContext::new(0, 5), &a), x);
        assert_ne!(c.ctr_decrypt(CtrContext::new(1, 5), &a), x);
    }

    #[test]
    fn decrypting_zero_gives_the_keystream() {
        let c = cipher();
        let ctx = CtrContext::new(3, 9);
        let ks = c.ctr_decrypt(ctx, &[0u8; 48]);
        let data: Vec<u8> = (0..48).collect();
        let enc = c.ctr_encrypt(ctx, &data).unwrap();
        let xored: Vec<u8> = data.iter().zip(&ks).map(|(a, b)| a ^ b).collect();
        assert_eq!(enc, xored);
    }

    #[test]
    fn reuse_check_flags_repeats() {
        let c = cipher().with_reuse_check();
        let ctx = CtrContext::new(2, 2);
        c.ctr_encrypt(ctx, &[1; 16]).unwrap();
        assert_eq!(c.ctr_encrypt(ctx, &[1; 16]), Err(CryptoError::ContextReuse { epoch: 2, index: 2 }));
    }

    #[test]
    fn iv_mode_round_trip_fresh_iv_and_empty() {
        let c = cipher();
        let x = b"trie node bytes".to_vec();
        let a = c.iv_encrypt(&x, 4096).unwrap();
        let b = c.iv_encrypt(&x, 4096).unwrap();
        assert_ne!(a, b);
        assert_eq!(c.iv_decrypt(&a).unwrap(), x);
        let e = c.iv_encrypt(&[], 4096).unwrap();
        assert_eq!(e.len(), IV_LEN + 16);
        assert!(c.iv_decrypt(&e).unwrap().is_empty());
    }

    #[test]
    fn iv_capacity_limits() {
        assert_eq!(iv_max_plaintext(4096), Some(4079));
        assert_eq!(iv_blob_len(4079), 4096);
        assert_eq!(iv_blob_len(4080), 4112);
        let c = cipher();
        assert!(c.iv_encrypt(&[0; 4079], 4096).is_ok());
        assert!(matches!(c.iv_encrypt(&[0; 4080], 4096), Err(CryptoError::PayloadTooLarge { .. })));
        assert_eq!(iv_max_plaintext(31), None);
    }

    #[test]
    fn wrong_key_is_usually_a_padding_error() {
        let blob = cipher().iv_encrypt(&[5; 100], 4096).unwrap();
        let other = Cipher::new(&CipherKey::from_seed(8));
        assert_ne!(other.iv_decrypt(&blob).ok(), Some(vec![5; 100]));
        assert_eq!(other.iv_decrypt(&blob[..20]), Err(CryptoError::MalformedPadding));
    }
}
