use crate::crypto::{Cipher, CipherKey};
use crate::device::{BlockDevice, TraceMeta};
use crate::error::{Error, Result};
use crate::region::CtrRegion;

use super::{check_addr, check_len, det_read, det_write, Geometry, ObliviousStore, PosPointer, WoramIo};

/// The de-amortized pointer scheme with its position map held in client
/// memory. Main area `[0, N)`, holding area `[N, N + M)`.
pub struct FlatWoram {
    dev: BlockDevice,
    cipher: Cipher,
    geom: Geometry,
    main: CtrRegion,
    holding: CtrRegion,
    pos: Vec<PosPointer>,
}

struct Io<'a> {
    dev: &'a mut BlockDevice,
    cipher: &'a Cipher,
    main: &'a mut CtrRegion,
    holding: &'a mut CtrRegion,
    pos: &'a mut [PosPointer],
}

impl WoramIo for Io<'_> {
    fn read_main(&mut self, a: u64) -> Result<Vec<u8>> {
        self.main.read(self.dev, self.cipher, a)
    }

    fn read_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        self.holding.read(self.dev, self.cipher, slot)
    }

    fn write_holding(&mut self, slot: u64, _a: u64, data: &[u8]) -> Result<()> {
        self.holding.write(self.dev, self.cipher, slot, data)
    }

    fn write_main(&mut self, a: u64, data: &[u8]) -> Result<()> {
        self.main.write(self.dev, self.cipher, a, data)
    }

    fn getpos(&mut self, a: u64) -> Result<PosPointer> {
        Ok(self.pos[a as usize])
    }

    fn setpos(&mut self, a: u64, ptr: PosPointer) -> Result<()> {
        self.pos[a as usize] = ptr;
        Ok(())
    }
}

impl FlatWoram {
    pub fn create(mut dev: BlockDevice, key: &CipherKey, geom: Geometry) -> Result<Self> {
        if dev.num_blocks() < geom.n + geom.m || dev.block_size() != geom.block_bytes {
            return Err(Error::InvalidGeometry(format!(
                "device of {} x {} bytes cannot hold N + M = {} blocks of {} bytes",
                dev.num_blocks(),
                dev.block_size(),
                geom.n + geom.m,
                geom.block_bytes
            )));
        }
        let cipher = Cipher::new(key);
        let mut main = CtrRegion::new(0, geom.n);
        main.format(&mut dev, &cipher)?;
        Ok(FlatWoram {
            dev,
            cipher,
            geom,
            main,
            holding: CtrRegion::new(geom.n, geom.m),
            pos: vec![PosPointer::NULL; geom.n as usize],
        })
    }

    pub fn counter(&self) -> u64 {
        self.holding.written
    }

    pub fn into_device(self) -> BlockDevice {
        self.dev
    }

    fn io(&mut self) -> Io<'_> {
        Io {
            dev: &mut self.dev,
            cipher: &self.cipher,
            main: &mut self.main,
            holding: &mut self.holding,
            pos: &mut self.pos,
        }
    }
}

impl ObliviousStore for FlatWoram {
    fn scheme(&self) -> &str {
        "flat"
    }

    fn num_blocks(&self) -> u64 {
        self.geom.n
    }

    fn block_size(&self) -> usize {
        self.geom.block_bytes
    }

    fn read(&mut self, a: u64) -> Result<Vec<u8>> {
        check_addr(a, self.geom.n)?;
        det_read(&mut self.io(), a)
    }

    fn write(&mut self, a: u64, data: &[u8]) -> Result<()> {
        check_addr(a, self.geom.n)?;
        check_len(data, self.geom.block_bytes)?;
        let (n, m, i) = (self.geom.n, self.geom.m, self.holding.written);
        det_write(&mut self.io(), n, m, i, a, data)
    }

    fn device(&self) -> &BlockDevice {
        &self.dev
    }

    fn trace_meta(&self) -> TraceMeta {
        TraceMeta::new("flat", self.dev.block_size(), self.dev.num_blocks())
            .with_param("n", self.geom.n)
            .with_param("m", self.geom.m)
    }
}
