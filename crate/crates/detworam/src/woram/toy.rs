use crate::crypto::{Cipher, CipherKey};
use crate::device::{BlockDevice, TraceMeta};
use crate::error::{Error, Result};
use crate::region::CtrRegion;

use super::{check_addr, check_len, ObliviousStore};

/// The toy construction: main area `[0, N)`, holding area `[N, 2N)` and an
/// in-memory position map. Every `N` writes the whole main area is rewritten
/// from the freshest copies.
pub struct ToyWoram {
    dev: BlockDevice,
    cipher: Cipher,
    n: u64,
    main: CtrRegion,
    holding: CtrRegion,
    /// Holding slot of the latest copy, or `None` when main is fresh.
    pos: Vec<Option<u64>>,
}

impl ToyWoram {
    pub fn create(mut dev: BlockDevice, key: &CipherKey, n: u64) -> Result<Self> {
        if n == 0 || dev.num_blocks() < 2 * n {
            return Err(Error::InvalidGeometry(format!(
                "toy scheme needs 2N = {} blocks, device has {}",
                2 * n,
                dev.num_blocks()
            )));
        }
        let cipher = Cipher::new(key);
        let mut main = CtrRegion::new(0, n);
        main.format(&mut dev, &cipher)?;
        Ok(ToyWoram { dev, cipher, n, main, holding: CtrRegion::new(n, n), pos: vec![None; n as usize] })
    }

    /// Number of logical writes so far.
    pub fn counter(&self) -> u64 {
        self.holding.written
    }

    pub fn into_device(self) -> BlockDevice {
        self.dev
    }

    fn refresh_all(&mut self) -> Result<()> {
        for a in 0..self.n {
            let d = self.read(a)?;
            self.main.write(&mut self.dev, &self.cipher, a, &d)?;
            self.pos[a as usize] = None;
        }
        Ok(())
    }
}

impl ObliviousStore for ToyWoram {
    fn scheme(&self) -> &str {
        "toy"
    }

    fn num_blocks(&self) -> u64 {
        self.n
    }

    fn block_size(&self) -> usize {
        self.dev.block_size()
    }

    fn read(&mut self, a: u64) -> Result<Vec<u8>> {
        check_addr(a, self.n)?;
        match self.pos[a as usize] {
            Some(slot) => self.holding.read(&self.dev, &self.cipher, slot),
            None => self.main.read(&self.dev, &self.cipher, a),
        }
    }

    fn write(&mut self, a: u64, data: &[u8]) -> Result<()> {
        check_addr(a, self.n)?;
        check_len(data, self.dev.block_size())?;
        let slot = self.holding.next_slot();
        self.holding.write(&mut self.dev, &self.cipher, slot, data)?;
        self.pos[a as usize] = Some(slot);
        if self.holding.written.is_multiple_of(self.n) {
            self.refresh_all()?;
        }
        Ok(())
    }

    fn device(&self) -> &BlockDevice {
        &self.dev
    }

    fn trace_meta(&self) -> TraceMeta {
        TraceMeta::new("toy", self.dev.block_size(), self.dev.num_blocks()).with_param("n", self.n)
    }
}
