//! Container files: a [`DetWoram`] on a single file-backed device.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::crypto::CipherKey;
use crate::detworam::{DetConfig, DetWoram};
use crate::device::BlockDevice;
use crate::error::{Error, Result};
use crate::layout::{LayoutMode, SUPERBLOCK_HEADER};
use crate::superblock::SuperblockHeader;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerConfig {
    pub path: PathBuf,
    pub block_bytes: usize,
    pub n: u64,
    /// `M = ratio * N`.
    pub ratio: u64,
    pub b: u64,
    pub mode: LayoutMode,
    pub durable: bool,
}

impl ContainerConfig {
    /// Defaults: 4096-byte blocks, `M = 3N`, `b = 64`, segmented, durable.
    pub fn new(path: impl Into<PathBuf>, n: u64) -> Self {
        ContainerConfig {
            path: path.into(),
            block_bytes: 4096,
            n,
            ratio: 3,
            b: 64,
            mode: LayoutMode::Segmented,
            durable: true,
        }
    }

    pub fn det_config(&self) -> Result<DetConfig> {
        let m = self.n.checked_mul(self.ratio).ok_or_else(|| Error::InvalidGeometry("M overflows".into()))?;
        Ok(DetConfig::new(self.n, m, self.b, self.block_bytes, self.mode).durable(self.durable))
    }
}

pub fn create_container(cfg: &ContainerConfig, key: &CipherKey) -> Result<DetWoram> {
    let det = cfg.det_config()?;
    let plan = det.plan()?;
    let dev = BlockDevice::create_file(&cfg.path, cfg.block_bytes, plan.total_blocks)?;
    DetWoram::create(dev, key, det)
}

/// Opens a container; the returned store persists state only on close unless
/// made durable.
pub fn open_container(path: &Path, key: &CipherKey) -> Result<DetWoram> {
    let mut head = vec![0u8; SUPERBLOCK_HEADER];
    File::open(path)?.read_exact(&mut head).map_err(|_| Error::BadMagic)?;
    let header = SuperblockHeader::parse(&head)?;
    let dev = BlockDevice::open_file(path, header.block_bytes as usize)?;
    DetWoram::open(dev, key)
}
