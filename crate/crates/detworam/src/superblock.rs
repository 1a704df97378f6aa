//! Container superblock: public geometry, counters and the encrypted root node.
//!
//! Little-endian layout, starting at block 0:
//!
//! | offset | field |
//! |-------:|-------|
//! | 0   | magic `DWORAM01` |
//! | 8   | version `u32` |
//! | 12  | block bytes `u32` |
//! | 16  | N `u64` |
//! | 24  | M `u64` |
//! | 32  | b `u32` |
//! | 36  | N_p `u64` |
//! | 44  | M_p `u64` |
//! | 52  | mode `u8`, 3 bytes zero |
//! | 56  | i `u64` |
//! | 64  | i_p `u64` |
//! | 72  | four area write counters `u64` |
//! | 104 | superblock blocks `u32` |
//! | 108 | root blob length `u32` |
//! | 112 | root blob: IV encryption of `DWROOT01` followed by the root node |

use crate::crypto::Cipher;
use crate::error::{Error, Result};
use crate::layout::{LayoutMode, SUPERBLOCK_HEADER};
use crate::trie::TrieNode;

pub const MAGIC: &[u8; 8] = b"DWORAM01";
pub const VERSION: u32 = 1;
const ROOT_TAG: &[u8; 8] = b"DWROOT01";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superblock {
    pub block_bytes: u32,
    pub n: u64,
    pub m: u64,
    pub b: u32,
    pub n_p: u64,
    pub m_p: u64,
    pub mode: LayoutMode,
    pub i: u64,
    pub ip: u64,
    /// Write counters of the four areas; their meaning depends on the mode.
    pub counters: [u64; 4],
    pub sb_blocks: u32,
    pub root: TrieNode,
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("slice"))
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().expect("slice"))
}

/// Public part of a superblock, readable without the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperblockHeader {
    pub block_bytes: u32,
    pub sb_blocks: u32,
}

impl SuperblockHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SUPERBLOCK_HEADER || &bytes[..8] != MAGIC || u32_at(bytes, 8) != VERSION {
            return Err(Error::BadMagic);
        }
        Ok(SuperblockHeader { block_bytes: u32_at(bytes, 12), sb_blocks: u32_at(bytes, 104) })
    }
}

impl Superblock {
    /// Serializes into exactly `sb_blocks * block_bytes` bytes.
    pub fn encode(&self, cipher: &Cipher) -> Result<Vec<u8>> {
        let total = self.sb_blocks as usize * self.block_bytes as usize;
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.block_bytes.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.b.to_le_bytes());
        out.extend_from_slice(&self.n_p.to_le_bytes());
        out.extend_from_slice(&self.m_p.to_le_bytes());
        out.extend_from_slice(&[self.mode.code(), 0, 0, 0]);
        out.extend_from_slice(&self.i.to_le_bytes());
        out.extend_from_slice(&self.ip.to_le_bytes());
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&self.sb_blocks.to_le_bytes());
        let mut root = ROOT_TAG.to_vec();
        root.extend_from_slice(&self.root.to_bytes());
        let blob = cipher.iv_encrypt(&root, total - SUPERBLOCK_HEADER)?;
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        debug_assert_eq!(out.len(), SUPERBLOCK_HEADER);
        out.extend_from_slice(&blob);
        out.resize(total, 0);
        Ok(out)
    }

    pub fn decode(bytes: &[u8], cipher: &Cipher) -> Result<Self> {
        let header = SuperblockHeader::parse(bytes)?;
        let mode = LayoutMode::from_code(bytes[52]).ok_or(Error::BadMagic)?;
        let blob_len = u32_at(bytes, 108) as usize;
        let blob = bytes.get(SUPERBLOCK_HEADER..SUPERBLOCK_HEADER + blob_len).ok_or(Error::BadMagic)?;
        let root = cipher.iv_decrypt(blob).map_err(|_| Error::WrongKey)?;
        let b = u32_at(bytes, 32);
        if root.len() != ROOT_TAG.len() + b as usize * crate::woram::POINTER_BYTES || &root[..8] != ROOT_TAG {
            return Err(Error::WrongKey);
        }
        Ok(Superblock {
            block_bytes: header.block_bytes,
            n: u64_at(bytes, 16),
            m: u64_at(bytes, 24),
            b,
            n_p: u64_at(bytes, 36),
            m_p: u64_at(bytes, 44),
            mode,
            i: u64_at(bytes, 56),
            ip: u64_at(bytes, 64),
            counters: [u64_at(bytes, 72), u64_at(bytes, 80), u64_at(bytes, 88), u64_at(bytes, 96)],
            sb_blocks: header.sb_blocks,
            root: TrieNode::from_bytes(&root[8..]),
        })
    }
}
