use crate::crypto::{Cipher, CtrContext};
use crate::device::BlockDevice;
use crate::error::Result;
use crate::woram::latest_epoch;

/// A circular, sequentially written area of counter-mode blocks. The epoch
/// of a block is the number of completed passes over the area, so
/// `(epoch, physical index)` never repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CtrRegion {
    pub start: u64,
    pub len: u64,
    pub written: u64,
}

impl CtrRegion {
    pub fn new(start: u64, len: u64) -> Self {
        CtrRegion { start, len, written: 0 }
    }

    pub fn next_slot(&self) -> u64 {
        self.written % self.len
    }

    pub fn write(&mut self, dev: &mut BlockDevice, cipher: &Cipher, slot: u64, data: &[u8]) -> Result<()> {
        assert_eq!(slot, self.next_slot(), "circular region written out of order");
        let index = self.start + slot;
        let ct = cipher.ctr_encrypt(CtrContext::new(self.written / self.len, index), data)?;
        dev.write_block(index, &ct)?;
        self.written += 1;
        Ok(())
    }

    /// Decrypted content of `slot`; never-written slots read as zeros.
    pub fn read(&self, dev: &BlockDevice, cipher: &Cipher, slot: u64) -> Result<Vec<u8>> {
        match latest_epoch(self.written, self.len, slot) {
            Some(epoch) => {
                let index = self.start + slot;
                let mut buf = dev.read_block(index)?;
                cipher.ctr_decrypt_in_place(CtrContext::new(epoch, index), &mut buf);
                Ok(buf)
            }
            None => Ok(vec![0; dev.block_size()]),
        }
    }

    /// Writes a full pass of zero blocks.
    pub fn format(&mut self, dev: &mut BlockDevice, cipher: &Cipher) -> Result<()> {
        let zero = vec![0u8; dev.block_size()];
        for slot in 0..self.len {
            self.write(dev, cipher, slot, &zero)?;
        }
        Ok(())
    }
}
