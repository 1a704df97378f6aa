use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{iv_blob_len, Cipher, CipherKey};
use crate::device::{BlockDevice, TraceMeta};
use crate::error::{Error, Result};
use crate::woram::{check_addr, check_len, ObliviousStore};

const EMPTY: u64 = u64::MAX;
/// Slot overhead: the stored address plus IV and padding.
pub const HIVE_SLOT_OVERHEAD: usize = 32;

/// HiVE-style randomized WoORAM: every logical write touches `k` uniformly
/// random slots and places stashed blocks into those found free. The
/// position map is kept in client memory.
pub struct HiveWoram {
    dev: BlockDevice,
    cipher: Cipher,
    n: u64,
    m: u64,
    k: usize,
    data_bytes: usize,
    pos: Vec<u64>,
    stash: VecDeque<(u64, Vec<u8>)>,
    max_stash: usize,
    rng: ChaCha20Rng,
}

impl HiveWoram {
    /// Uses every block of `dev` as a slot. Needs at least `2n` slots.
    pub fn create(dev: BlockDevice, key: &CipherKey, n: u64, k: usize, seed: u64) -> Result<Self> {
        let bs = dev.block_size();
        let m = dev.num_blocks();
        if n == 0 || m < 2 * n || k == 0 {
            return Err(Error::InvalidGeometry(format!("HiVE needs N >= 1, M >= 2N and k >= 1 (N={n}, M={m}, k={k})")));
        }
        if !bs.is_multiple_of(16) || bs < 48 {
            return Err(Error::InvalidGeometry(format!(
                "HiVE slots need a multiple of 16 bytes, at least 48 (got {bs})"
            )));
        }
        let data_bytes = bs - HIVE_SLOT_OVERHEAD;
        debug_assert_eq!(iv_blob_len(8 + data_bytes), bs);
        let cipher = Cipher::new(key);
        let mut store = HiveWoram {
            dev,
            cipher,
            n,
            m,
            k,
            data_bytes,
            pos: vec![EMPTY; n as usize],
            stash: VecDeque::new(),
            max_stash: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
        };
        let empty = vec![0u8; data_bytes];
        for r in 0..m {
            let slot = store.seal(EMPTY, &empty)?;
            store.dev.write_block(r, &slot)?;
        }
        Ok(store)
    }

    fn seal(&self, addr: u64, data: &[u8]) -> Result<Vec<u8>> {
        let mut plain = addr.to_le_bytes().to_vec();
        plain.extend_from_slice(data);
        Ok(self.cipher.iv_encrypt(&plain, self.dev.block_size())?)
    }

    fn open_slot(&self, raw: &[u8]) -> Result<(u64, Vec<u8>)> {
        let plain = self.cipher.iv_decrypt(raw)?;
        let addr = u64::from_le_bytes(plain[..8].try_into().expect("slot header"));
        Ok((addr, plain[8..].to_vec()))
    }

    fn is_free(&self, r: u64, addr: u64) -> bool {
        addr == EMPTY || self.pos[addr as usize] != r
    }

    pub fn stash_len(&self) -> usize {
        self.stash.len()
    }

    /// Largest stash occupancy seen after any write.
    pub fn max_stash(&self) -> usize {
        self.max_stash
    }

    pub fn into_device(self) -> BlockDevice {
        self.dev
    }

    /// Cross-checks the free-slot test against the set of slots the position
    /// map points at, by decrypting a device image (no traced I/O).
    pub fn verify_occupancy(&self) -> Result<bool> {
        let image = self.dev.image()?;
        let occupied: HashSet<u64> = self.pos.iter().copied().filter(|&p| p != EMPTY).collect();
        for (r, raw) in image.chunks(self.dev.block_size()).enumerate() {
            let (addr, _) = self.open_slot(raw)?;
            if self.is_free(r as u64, addr) == occupied.contains(&(r as u64)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl ObliviousStore for HiveWoram {
    fn scheme(&self) -> &str {
        "hive"
    }

    fn num_blocks(&self) -> u64 {
        self.n
    }

    fn block_size(&self) -> usize {
        self.data_bytes
    }

    fn read(&mut self, a: u64) -> Result<Vec<u8>> {
        check_addr(a, self.n)?;
        if let Some((_, d)) = self.stash.iter().find(|(x, _)| *x == a) {
            return Ok(d.clone());
        }
        match self.pos[a as usize] {
            EMPTY => Ok(vec![0; self.data_bytes]),
            r => Ok(self.open_slot(&self.dev.read_block(r)?)?.1),
        }
    }

    fn write(&mut self, a: u64, data: &[u8]) -> Result<()> {
        check_addr(a, self.n)?;
        check_len(data, self.data_bytes)?;
        match self.stash.iter_mut().find(|(x, _)| *x == a) {
            Some(entry) => entry.1 = data.to_vec(),
            None => self.stash.push_back((a, data.to_vec())),
        }
        for _ in 0..self.k {
            let r = self.rng.gen_range(0..self.m);
            let (addr, old) = self.open_slot(&self.dev.read_block(r)?)?;
            let sealed = if self.is_free(r, addr) && !self.stash.is_empty() {
                let (alpha, delta) = self.stash.pop_front().expect("non-empty stash");
                self.pos[alpha as usize] = r;
                self.seal(alpha, &delta)?
            } else {
                self.seal(addr, &old)?
            };
            self.dev.write_block(r, &sealed)?;
        }
        self.max_stash = self.max_stash.max(self.stash.len());
        Ok(())
    }

    fn device(&self) -> &BlockDevice {
        &self.dev
    }

    fn trace_meta(&self) -> TraceMeta {
        TraceMeta::new("hive", self.dev.block_size(), self.dev.num_blocks())
            .with_param("n", self.n)
            .with_param("m", self.m)
            .with_param("k", self.k)
    }
}
