//! Physical placement of the WoORAM areas on one device.
//!
//! Segmented: `[superblock | data main | data holding | pos main | pos holding]`
//! with trie nodes packed several to a block.
//!
//! Interleaved (`M = 2N`): after the superblock come `M` units of two blocks.
//! Unit `u` is the data holding block `u` followed by a block whose first
//! half carries half of main block `u / 2` and whose second half carries the
//! step's encrypted trie nodes. Even units carry the back half, odd units the
//! front half, so every logical write is exactly two consecutive block writes.

use crate::crypto::{iv_blob_len, iv_max_plaintext, Cipher, CtrContext};
use crate::device::BlockDevice;
use crate::error::{Error, Result};
use crate::trie::{feasibility, feasibility_terms, pack_capacity, TrieParams};
use crate::woram::{latest_epoch, Geometry};

/// Bytes of the fixed superblock header that precede the encrypted root.
pub const SUPERBLOCK_HEADER: usize = 112;
const ROOT_TAG_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutMode {
    Segmented,
    Interleaved,
}

impl LayoutMode {
    pub fn code(self) -> u8 {
        match self {
            LayoutMode::Segmented => 0,
            LayoutMode::Interleaved => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayoutMode::Segmented),
            1 => Some(LayoutMode::Interleaved),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayoutMode::Segmented => "seg",
            LayoutMode::Interleaved => "ilv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Region {
    pub start: u64,
    pub len: u64,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    pub fn contains(&self, index: u64) -> bool {
        index >= self.start && index < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Front,
    Back,
}

/// Half of a logical main block stored in the first half of physical block `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfBlockRef {
    pub index: u64,
    pub half: Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MainPlacement {
    Block(u64),
    Split { back: HalfBlockRef, front: HalfBlockRef },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutPlan {
    pub mode: LayoutMode,
    pub block_bytes: usize,
    pub n: u64,
    pub m: u64,
    pub superblock: Region,
    /// Segmented only.
    pub data_main: Region,
    pub data_holding: Region,
    pub pos_main: Region,
    pub pos_holding: Region,
    /// Interleaved only: the `2M` blocks of units.
    pub units: Region,
    /// Trie nodes per packed block (segmented) or per step payload (interleaved).
    pub pack: usize,
    pub total_blocks: u64,
}

/// Blocks needed by a superblock holding a root node of `node_bytes`.
pub fn superblock_blocks(block_bytes: usize, node_bytes: usize) -> u64 {
    let bytes = SUPERBLOCK_HEADER + iv_blob_len(ROOT_TAG_LEN + node_bytes);
    bytes.div_ceil(block_bytes) as u64
}

pub fn plan_layout(geom: &Geometry, trie: &TrieParams, mode: LayoutMode) -> Result<LayoutPlan> {
    let bb = geom.block_bytes;
    if !bb.is_multiple_of(32) {
        return Err(Error::InvalidGeometry(format!("block size {bb} is not a multiple of 32 bytes")));
    }
    let node_bytes = trie.node_bytes();
    let sb = Region { start: 0, len: superblock_blocks(bb, node_bytes) };
    let mut plan = LayoutPlan {
        mode,
        block_bytes: bb,
        n: geom.n,
        m: geom.m,
        superblock: sb,
        data_main: Region::default(),
        data_holding: Region::default(),
        pos_main: Region::default(),
        pos_holding: Region::default(),
        units: Region::default(),
        pack: 0,
        total_blocks: 0,
    };
    match mode {
        LayoutMode::Segmented => {
            let pack = pack_capacity(bb, node_bytes);
            if trie.n_p > 0 && pack == 0 {
                return Err(Error::InfeasiblePacking(format!(
                    "a {node_bytes}-byte trie node does not fit a {bb}-byte block"
                )));
            }
            let blocks = |nodes: u64| if nodes == 0 { 0 } else { nodes.div_ceil(pack as u64) };
            plan.pack = pack;
            plan.data_main = Region { start: sb.end(), len: geom.n };
            plan.data_holding = Region { start: plan.data_main.end(), len: geom.m };
            plan.pos_main = Region { start: plan.data_holding.end(), len: blocks(trie.n_p) };
            plan.pos_holding = Region { start: plan.pos_main.end(), len: blocks(trie.m_p) };
            plan.total_blocks = plan.pos_holding.end();
        }
        LayoutMode::Interleaved => {
            if geom.m != 2 * geom.n {
                return Err(Error::InvalidGeometry(format!("interleaving needs M = 2N (N={}, M={})", geom.n, geom.m)));
            }
            let (h, lhs, rhs) = feasibility_terms(geom.n as u128, trie.b as u128, 8 * bb as u128);
            if !feasibility(geom.n as u128, trie.b as u128, 8 * bb as u128) {
                return Err(Error::InfeasiblePacking(format!(
                    "path of {} pointers needs {lhs} bits, half block has {rhs}",
                    h + 1
                )));
            }
            let need = payload_bytes(trie.h as usize + 1, node_bytes);
            let cap = iv_max_plaintext(bb / 2).unwrap_or(0);
            if need > cap {
                return Err(Error::InfeasiblePacking(format!(
                    "{} nodes of {node_bytes} bytes need {need} bytes, half block holds {cap}",
                    trie.h + 1
                )));
            }
            plan.pack = trie.h as usize + 1;
            plan.units = Region { start: sb.end(), len: 2 * geom.m };
            plan.total_blocks = plan.units.end();
        }
    }
    if plan.total_blocks > u32::MAX as u64 {
        return Err(Error::InvalidGeometry("layout exceeds 2^32 blocks".into()));
    }
    Ok(plan)
}

/// Plaintext bytes of a step payload: a count byte and the nodes.
pub fn payload_bytes(nodes: usize, node_bytes: usize) -> usize {
    1 + nodes * node_bytes
}

impl LayoutPlan {
    pub fn unit_holding(&self, u: u64) -> u64 {
        self.units.start + 2 * u
    }

    pub fn unit_square(&self, u: u64) -> u64 {
        self.units.start + 2 * u + 1
    }

    pub fn half_bytes(&self) -> usize {
        self.block_bytes / 2
    }

    /// Blocks after the superblock.
    pub fn payload_blocks(&self) -> u64 {
        self.total_blocks - self.superblock.len
    }
}

pub fn resolve_main(plan: &LayoutPlan, a: u64) -> MainPlacement {
    match plan.mode {
        LayoutMode::Segmented => MainPlacement::Block(plan.data_main.start + a),
        LayoutMode::Interleaved => MainPlacement::Split {
            back: HalfBlockRef { index: plan.unit_square(2 * a), half: Half::Back },
            front: HalfBlockRef { index: plan.unit_square(2 * a + 1), half: Half::Front },
        },
    }
}

/// Emits step `step` of the interleaved schedule: the holding block of unit
/// `step mod M`, then the unit's main-half-plus-payload block. Holding blocks
/// use epoch `step / M`; the other block uses `step / M + 1` because create
/// wrote pass 0.
pub fn interleaved_write_step(
    dev: &mut BlockDevice,
    cipher: &Cipher,
    plan: &LayoutPlan,
    step: u64,
    holding: &[u8],
    main_half: &[u8],
    payload: &[u8],
) -> Result<()> {
    let half = plan.half_bytes();
    assert_eq!(holding.len(), plan.block_bytes);
    assert_eq!(main_half.len(), half);
    let (u, cycle) = (step % plan.m, step / plan.m);
    let hold_idx = plan.unit_holding(u);
    let sq_idx = plan.unit_square(u);
    let square = encode_square(cipher, sq_idx, cycle + 1, main_half, payload, half)?;
    let hold_ct = cipher.ctr_encrypt(CtrContext::new(cycle, hold_idx), holding)?;
    dev.write_block(hold_idx, &hold_ct)?;
    dev.write_block(sq_idx, &square)
}

pub(crate) fn encode_square(
    cipher: &Cipher,
    index: u64,
    epoch: u64,
    main_half: &[u8],
    payload: &[u8],
    half: usize,
) -> Result<Vec<u8>> {
    // Fixed-length plaintext, so the blob length never reveals the node count.
    let cap = iv_max_plaintext(half).unwrap_or(0);
    if payload.len() > cap {
        return Err(Error::PayloadOverflow { needed: payload.len(), capacity: cap });
    }
    let mut plain = payload.to_vec();
    plain.resize(cap, 0);
    let blob = cipher.iv_encrypt(&plain, half)?;
    let mut block = cipher.ctr_encrypt(CtrContext::new(epoch, index), main_half)?;
    block.extend_from_slice(&blob);
    block.resize(2 * half, 0);
    Ok(block)
}

/// Decrypts the main half and the (zero-filled) payload of unit `u`, given
/// the number of completed steps. Create counts as one pass over all units.
pub fn read_square(
    dev: &BlockDevice,
    cipher: &Cipher,
    plan: &LayoutPlan,
    u: u64,
    steps: u64,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let half = plan.half_bytes();
    let idx = plan.unit_square(u);
    let epoch = latest_epoch(plan.m + steps, plan.m, u).expect("create writes every unit");
    let mut block = dev.read_block(idx)?;
    let blob_len = iv_blob_len(iv_max_plaintext(half).unwrap_or(0));
    let payload = cipher.iv_decrypt(&block[half..half + blob_len])?;
    block.truncate(half);
    cipher.ctr_decrypt_in_place(CtrContext::new(epoch, idx), &mut block);
    Ok((block, payload))
}
