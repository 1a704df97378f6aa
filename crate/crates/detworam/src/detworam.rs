//! The full scheme: pointer-based data WoORAM whose position map is the trie,
//! stored in a second WoORAM, placed on a device by a [`LayoutPlan`].

use std::sync::Arc;

use crate::crypto::{Cipher, CipherKey, CtrContext};
use crate::device::{BlockDevice, FillFn, TraceMeta};
use crate::error::{Error, Result};
use crate::layout::{interleaved_write_step, plan_layout, read_square, LayoutMode, LayoutPlan};
use crate::region::CtrRegion;
use crate::superblock::{Superblock, SuperblockHeader};
use crate::trie::{pack_raw, trie_params, unpack_raw, NodeStore, Trie, TrieNode, TrieParams};
use crate::woram::{
    bit_diff, check_addr, check_len, det_read, det_write, latest_epoch, Geometry, ObliviousStore, PosPointer, WoramIo,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetConfig {
    pub n: u64,
    pub m: u64,
    pub b: u64,
    pub block_bytes: usize,
    pub mode: LayoutMode,
    /// Persist client state after every logical write.
    pub durable: bool,
}

impl DetConfig {
    pub fn new(n: u64, m: u64, b: u64, block_bytes: usize, mode: LayoutMode) -> Self {
        DetConfig { n, m, b, block_bytes, mode, durable: false }
    }

    pub fn durable(mut self, durable: bool) -> Self {
        self.durable = durable;
        self
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.n, self.m, self.block_bytes)
    }

    pub fn trie(&self) -> Result<TrieParams> {
        let p = trie_params(self.n, self.b)?;
        Ok(match self.mode {
            LayoutMode::Segmented => p,
            // One position holding slot per payload position: M steps of h writes.
            LayoutMode::Interleaved => p.with_holding(self.m * p.h as u64),
        })
    }

    pub fn plan(&self) -> Result<LayoutPlan> {
        let geom = self.geometry()?;
        let trie = self.trie()?;
        if trie.m_p >= u32::MAX as u64 {
            return Err(Error::InvalidGeometry("position holding area too large".into()));
        }
        plan_layout(&geom, &trie, self.mode)
    }
}

/// Packed trie-node area with one open block buffer.
#[derive(Debug, Clone)]
struct PackedArea {
    start: u64,
    slots: u64,
    pack: u64,
    node_bytes: usize,
    written: u64,
    buf: Option<PackBuffer>,
}

#[derive(Debug, Clone)]
struct PackBuffer {
    block: u64,
    nodes: Vec<Vec<u8>>,
    dirty: bool,
}

impl PackedArea {
    fn load(&self, dev: &BlockDevice, cipher: &Cipher, block: u64) -> Result<Vec<Vec<u8>>> {
        let raw = dev.read_block(self.start + block)?;
        unpack_raw(cipher, &raw, self.node_bytes, self.pack as usize)
    }

    fn read(&self, dev: &BlockDevice, cipher: &Cipher, slot: u64) -> Result<Vec<u8>> {
        let block = slot / self.pack;
        let off = (slot % self.pack) as usize;
        match &self.buf {
            Some(buf) if buf.block == block => Ok(buf.nodes[off].clone()),
            _ => Ok(self.load(dev, cipher, block)?.swap_remove(off)),
        }
    }

    fn write(&mut self, dev: &mut BlockDevice, cipher: &Cipher, slot: u64, node: &[u8]) -> Result<()> {
        assert_eq!(slot, self.written % self.slots, "packed area written out of order");
        let block = slot / self.pack;
        if self.buf.as_ref().is_none_or(|b| b.block != block) {
            self.flush(dev, cipher)?;
            let nodes = self.load(dev, cipher, block)?;
            self.buf = Some(PackBuffer { block, nodes, dirty: false });
        }
        let buf = self.buf.as_mut().expect("buffer loaded");
        buf.nodes[(slot % self.pack) as usize] = node.to_vec();
        buf.dirty = true;
        self.written += 1;
        if (slot + 1).is_multiple_of(self.pack) || slot + 1 == self.slots {
            self.flush(dev, cipher)?;
        }
        Ok(())
    }

    fn flush(&mut self, dev: &mut BlockDevice, cipher: &Cipher) -> Result<()> {
        if let Some(buf) = self.buf.as_mut().filter(|b| b.dirty) {
            let refs: Vec<&[u8]> = buf.nodes.iter().map(Vec::as_slice).collect();
            let blob = pack_raw(cipher, &refs, dev.block_size())?;
            dev.write_block(self.start + buf.block, &blob)?;
            buf.dirty = false;
        }
        Ok(())
    }

    fn format(&mut self, dev: &mut BlockDevice, cipher: &Cipher, node: &[u8]) -> Result<()> {
        let refs = vec![node; self.pack as usize];
        for block in 0..self.slots.div_ceil(self.pack) {
            dev.write_block(self.start + block, &pack_raw(cipher, &refs, dev.block_size())?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SegAreas {
    data_main: CtrRegion,
    data_holding: CtrRegion,
    pos_main: PackedArea,
    pos_holding: PackedArea,
}

/// Writes buffered during one interleaved step, emitted together at its end.
#[derive(Debug, Clone)]
struct StepBuf {
    step: u64,
    holding: Option<Vec<u8>>,
    main_half: Option<Vec<u8>>,
    nodes: Vec<Option<Vec<u8>>>,
    refresh: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct IlvAreas {
    steps: u64,
    pos_main_written: u64,
    pos_holding_written: u64,
    pending: Option<StepBuf>,
}

#[derive(Debug, Clone)]
enum Areas {
    Seg(SegAreas),
    Ilv(IlvAreas),
}

struct Core {
    dev: BlockDevice,
    cipher: Cipher,
    plan: LayoutPlan,
    params: TrieParams,
    areas: Areas,
}

impl Core {
    fn null_node(&self) -> Vec<u8> {
        TrieNode::empty(self.params.b).to_bytes()
    }

    fn counters(&self) -> [u64; 4] {
        match &self.areas {
            Areas::Seg(s) => [s.data_main.written, s.data_holding.written, s.pos_main.written, s.pos_holding.written],
            Areas::Ilv(a) => [a.steps, self.plan.m + a.steps, a.pos_main_written, a.pos_holding_written],
        }
    }

    fn ilv(&mut self) -> &mut IlvAreas {
        match &mut self.areas {
            Areas::Ilv(a) => a,
            Areas::Seg(_) => unreachable!("interleaved operation on a segmented layout"),
        }
    }

    fn pending(&mut self) -> &mut StepBuf {
        self.ilv().pending.as_mut().expect("interleaved write outside a step")
    }

    fn data_read_main(&mut self, a: u64) -> Result<Vec<u8>> {
        match &self.areas {
            Areas::Seg(s) => s.data_main.read(&self.dev, &self.cipher, a),
            Areas::Ilv(ilv) => {
                let (mut front, _) = read_square(&self.dev, &self.cipher, &self.plan, 2 * a + 1, ilv.steps)?;
                let (back, _) = read_square(&self.dev, &self.cipher, &self.plan, 2 * a, ilv.steps)?;
                front.extend_from_slice(&back);
                Ok(front)
            }
        }
    }

    fn data_read_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        match &self.areas {
            Areas::Seg(s) => s.data_holding.read(&self.dev, &self.cipher, slot),
            Areas::Ilv(ilv) => {
                if let Some(p) = ilv.pending.as_ref().filter(|p| p.step % self.plan.m == slot) {
                    if let Some(h) = &p.holding {
                        return Ok(h.clone());
                    }
                }
                match latest_epoch(ilv.steps, self.plan.m, slot) {
                    None => Ok(vec![0; self.plan.block_bytes]),
                    Some(epoch) => {
                        let idx = self.plan.unit_holding(slot);
                        let mut buf = self.dev.read_block(idx)?;
                        self.cipher.ctr_decrypt_in_place(CtrContext::new(epoch, idx), &mut buf);
                        Ok(buf)
                    }
                }
            }
        }
    }

    fn data_write_holding(&mut self, slot: u64, data: &[u8]) -> Result<()> {
        match &mut self.areas {
            Areas::Seg(s) => s.data_holding.write(&mut self.dev, &self.cipher, slot, data),
            Areas::Ilv(_) => {
                let m = self.plan.m;
                let p = self.pending();
                assert_eq!(slot, p.step % m, "holding slot off the interleaved schedule");
                p.holding = Some(data.to_vec());
                Ok(())
            }
        }
    }

    fn data_write_main(&mut self, a: u64, data: &[u8]) -> Result<()> {
        match &mut self.areas {
            Areas::Seg(s) => s.data_main.write(&mut self.dev, &self.cipher, a, data),
            Areas::Ilv(_) => unreachable!("interleaved main blocks are written a half at a time"),
        }
    }

    /// Node `j` of the payload stored at interleaved unit `u`.
    fn payload_node(&self, u: u64, j: usize) -> Result<Vec<u8>> {
        let Areas::Ilv(ilv) = &self.areas else { unreachable!() };
        let (_, payload) = read_square(&self.dev, &self.cipher, &self.plan, u, ilv.steps)?;
        let nb = self.params.node_bytes();
        if j >= payload[0] as usize {
            return Err(Error::CorruptPointer {
                pointer: PosPointer::new(u * self.params.h as u64 + j as u64, 0, false),
                limit: self.params.m_p,
            });
        }
        Ok(payload[1 + j * nb..1 + (j + 1) * nb].to_vec())
    }

    fn begin_step(&mut self, step: u64) {
        let h = self.params.h as usize;
        let ilv = self.ilv();
        debug_assert_eq!(ilv.steps, step);
        ilv.pending = Some(StepBuf { step, holding: None, main_half: None, nodes: vec![None; h], refresh: None });
    }

    fn end_step(&mut self) -> Result<()> {
        let p = self.ilv().pending.take().expect("step in progress");
        let mut payload = vec![0u8];
        for node in &p.nodes {
            payload.extend_from_slice(node.as_ref().expect("every position slot of the step written"));
        }
        if let Some(r) = &p.refresh {
            payload.extend_from_slice(r);
        }
        payload[0] = (p.nodes.len() + p.refresh.is_some() as usize) as u8;
        let holding = p.holding.expect("holding block of the step");
        let half = p.main_half.expect("main half of the step");
        interleaved_write_step(&mut self.dev, &self.cipher, &self.plan, p.step, &holding, &half, &payload)?;
        self.ilv().steps += 1;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Areas::Seg(s) = &mut self.areas {
            s.pos_main.flush(&mut self.dev, &self.cipher)?;
            s.pos_holding.flush(&mut self.dev, &self.cipher)?;
        }
        Ok(())
    }
}

impl NodeStore for Core {
    fn read_pos_main(&mut self, k: u64) -> Result<Vec<u8>> {
        match &self.areas {
            Areas::Seg(s) => s.pos_main.read(&self.dev, &self.cipher, k),
            Areas::Ilv(ilv) => {
                let (n_p, m_p, h) = (self.params.n_p as u128, self.params.m_p as u128, self.params.h as u64);
                let done = ilv.pos_main_written;
                if done <= k {
                    return Ok(self.null_node());
                }
                // Latest refresh of node k, the position write that performed it, and its step.
                let c = k as u128 + n_p * ((done - 1 - k) as u128 / n_p);
                let ip = ((c + 1) * m_p).div_ceil(n_p) - 1;
                let step = (ip / h as u128) as u64;
                if let Some(p) = ilv.pending.as_ref().filter(|p| p.step == step) {
                    return Ok(p.refresh.clone().expect("refresh recorded in this step"));
                }
                self.payload_node(step % self.plan.m, h as usize)
            }
        }
    }

    fn read_pos_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        match &self.areas {
            Areas::Seg(s) => s.pos_holding.read(&self.dev, &self.cipher, slot),
            Areas::Ilv(ilv) => {
                let h = self.params.h as u64;
                let (u, j) = (slot / h, (slot % h) as usize);
                if let Some(p) = ilv.pending.as_ref().filter(|p| p.step % self.plan.m == u) {
                    if let Some(node) = &p.nodes[j] {
                        return Ok(node.clone());
                    }
                }
                self.payload_node(u, j)
            }
        }
    }

    fn write_pos_holding(&mut self, slot: u64, node: &[u8]) -> Result<()> {
        match &mut self.areas {
            Areas::Seg(s) => s.pos_holding.write(&mut self.dev, &self.cipher, slot, node),
            Areas::Ilv(ilv) => {
                let (h, m, m_p) = (self.params.h as u64, self.plan.m, self.params.m_p);
                assert_eq!(slot, ilv.pos_holding_written % m_p);
                ilv.pos_holding_written += 1;
                let p = ilv.pending.as_mut().expect("position write outside a step");
                assert_eq!(slot / h, p.step % m, "position slot off the interleaved schedule");
                p.nodes[(slot % h) as usize] = Some(node.to_vec());
                Ok(())
            }
        }
    }

    fn write_pos_main(&mut self, k: u64, node: &[u8]) -> Result<()> {
        match &mut self.areas {
            Areas::Seg(s) => s.pos_main.write(&mut self.dev, &self.cipher, k, node),
            Areas::Ilv(ilv) => {
                assert_eq!(k, ilv.pos_main_written % self.params.n_p);
                ilv.pos_main_written += 1;
                let p = ilv.pending.as_mut().expect("position write outside a step");
                let needed = 1 + (p.nodes.len() + 1) * self.params.node_bytes();
                if p.refresh.is_some() {
                    return Err(Error::PayloadOverflow { needed, capacity: self.plan.half_bytes() });
                }
                p.refresh = Some(node.to_vec());
                Ok(())
            }
        }
    }
}

/// Shadow bookkeeping that checks no holding slot is overwritten while it
/// still holds the only fresh copy of an address.
#[derive(Debug, Clone)]
pub struct Audit {
    tags: Vec<Option<(u64, u64)>>,
    latest: Vec<u64>,
    in_main: Vec<u64>,
    snapshot: Vec<u64>,
    holding_writes: u64,
    violations: u64,
    first: Option<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub step: u64,
    pub slot: u64,
    pub addr: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditReport {
    pub holding_writes: u64,
    pub violations: u64,
    pub first: Option<Violation>,
}

impl Audit {
    fn new(n: u64, m: u64) -> Self {
        Audit {
            tags: vec![None; m as usize],
            latest: vec![0; n as usize],
            in_main: vec![0; n as usize],
            snapshot: vec![0; n as usize],
            holding_writes: 0,
            violations: 0,
            first: None,
        }
    }

    fn holding_write(&mut self, step: u64, slot: u64, addr: u64) {
        if let Some((old, ver)) = self.tags[slot as usize] {
            if self.latest[old as usize] == ver && self.in_main[old as usize] < ver {
                self.violations += 1;
                self.first.get_or_insert(Violation { step, slot, addr: old });
            }
        }
        self.latest[addr as usize] += 1;
        self.tags[slot as usize] = Some((addr, self.latest[addr as usize]));
        self.holding_writes += 1;
    }

    fn main_write(&mut self, addr: u64) {
        self.in_main[addr as usize] = self.latest[addr as usize];
    }

    fn take_snapshot(&mut self, addr: u64) {
        self.snapshot[addr as usize] = self.latest[addr as usize];
    }

    fn complete_snapshot(&mut self, addr: u64) {
        self.in_main[addr as usize] = self.snapshot[addr as usize];
    }

    pub fn report(&self) -> AuditReport {
        AuditReport { holding_writes: self.holding_writes, violations: self.violations, first: self.first }
    }
}

struct DataIo<'a> {
    core: &'a mut Core,
    trie: &'a mut Trie,
    audit: Option<&'a mut Audit>,
    step: u64,
    stale_refresh: bool,
}

impl WoramIo for DataIo<'_> {
    fn read_main(&mut self, a: u64) -> Result<Vec<u8>> {
        self.core.data_read_main(a)
    }

    fn read_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        self.core.data_read_holding(slot)
    }

    fn write_holding(&mut self, slot: u64, a: u64, data: &[u8]) -> Result<()> {
        if let Some(audit) = self.audit.as_deref_mut() {
            audit.holding_write(self.step, slot, a);
        }
        self.core.data_write_holding(slot, data)
    }

    fn write_main(&mut self, a: u64, data: &[u8]) -> Result<()> {
        if let Some(audit) = self.audit.as_deref_mut() {
            if !self.stale_refresh {
                audit.main_write(a);
            }
        }
        self.core.data_write_main(a, data)
    }

    fn getpos(&mut self, a: u64) -> Result<PosPointer> {
        self.trie.getpos_data(self.core, a)
    }

    fn setpos(&mut self, a: u64, ptr: PosPointer) -> Result<()> {
        self.trie.setpos_data(self.core, a, ptr)
    }

    fn fresh(&mut self, a: u64) -> Result<Vec<u8>> {
        if self.stale_refresh {
            return self.read_main(a);
        }
        det_read(self, a)
    }
}

/// DetWoORAM with the trie position map. Client state is the key, the write
/// counters and the root node; nothing else survives a restart.
pub struct DetWoram {
    core: Core,
    trie: Trie,
    i: u64,
    durable: bool,
    audit: Option<Audit>,
    skip_refresh_at: Option<u64>,
}

impl DetWoram {
    /// Formats `dev` and returns a fresh store. The device must be at least
    /// `cfg.plan()?.total_blocks` long.
    pub fn create(dev: BlockDevice, key: &CipherKey, cfg: DetConfig) -> Result<Self> {
        Self::create_inner(dev, Cipher::new(key), cfg, true)
    }

    /// Like [`DetWoram::create`] with a counter-reuse check on every encryption.
    pub fn create_checked(dev: BlockDevice, key: &CipherKey, cfg: DetConfig) -> Result<Self> {
        Self::create_inner(dev, Cipher::new(key).with_reuse_check(), cfg, true)
    }

    /// Store on a sparse in-memory device whose data main area is produced on
    /// demand with exactly the bytes a format pass would write. For geometries
    /// too large to materialize.
    pub fn create_sparse(key: &CipherKey, cfg: DetConfig) -> Result<Self> {
        let plan = cfg.plan()?;
        let region = plan.data_main;
        let fill_cipher = Cipher::new(key);
        let fill: FillFn = Arc::new(move |index, buf: &mut [u8]| {
            buf.fill(0);
            if region.contains(index) {
                fill_cipher.ctr_decrypt_in_place(CtrContext::new(0, index), buf);
            }
        });
        let dev = BlockDevice::sparse(cfg.block_bytes, plan.total_blocks, Some(fill))?;
        Self::create_inner(dev, Cipher::new(key), cfg, cfg.mode == LayoutMode::Interleaved)
    }

    fn create_inner(mut dev: BlockDevice, cipher: Cipher, cfg: DetConfig, format_data: bool) -> Result<Self> {
        let plan = cfg.plan()?;
        let params = cfg.trie()?;
        if dev.block_size() != cfg.block_bytes || dev.num_blocks() < plan.total_blocks {
            return Err(Error::InvalidGeometry(format!(
                "layout needs {} blocks of {} bytes, device has {} of {}",
                plan.total_blocks,
                cfg.block_bytes,
                dev.num_blocks(),
                dev.block_size()
            )));
        }
        dev.set_reserved(plan.superblock.len);
        let null = TrieNode::empty(params.b).to_bytes();
        let areas = match plan.mode {
            LayoutMode::Segmented => {
                let packed = |region: crate::layout::Region, slots| PackedArea {
                    start: region.start,
                    slots,
                    pack: plan.pack as u64,
                    node_bytes: params.node_bytes(),
                    written: 0,
                    buf: None,
                };
                let mut s = SegAreas {
                    data_main: CtrRegion::new(plan.data_main.start, plan.n),
                    data_holding: CtrRegion::new(plan.data_holding.start, plan.m),
                    pos_main: packed(plan.pos_main, params.n_p),
                    pos_holding: packed(plan.pos_holding, params.m_p),
                };
                if format_data {
                    s.data_main.format(&mut dev, &cipher)?;
                } else {
                    s.data_main.written = plan.n;
                }
                if params.n_p > 0 {
                    s.pos_main.format(&mut dev, &cipher, &null)?;
                    s.pos_holding.format(&mut dev, &cipher, &null)?;
                }
                Areas::Seg(s)
            }
            LayoutMode::Interleaved => {
                let half = vec![0u8; plan.half_bytes()];
                for u in 0..plan.m {
                    let idx = plan.unit_square(u);
                    let block = crate::layout::encode_square(&cipher, idx, 0, &half, &[0], plan.half_bytes())?;
                    dev.write_block(idx, &block)?;
                }
                Areas::Ilv(IlvAreas { steps: 0, pos_main_written: 0, pos_holding_written: 0, pending: None })
            }
        };
        let core = Core { dev, cipher, plan, params, areas };
        let mut store = DetWoram {
            trie: Trie::new(params, plan.m, plan.block_bytes),
            core,
            i: 0,
            durable: cfg.durable,
            audit: None,
            skip_refresh_at: None,
        };
        store.persist_state()?;
        Ok(store)
    }

    /// Restores a store from its superblock.
    pub fn open(mut dev: BlockDevice, key: &CipherKey) -> Result<Self> {
        let first = dev.read_block(0)?;
        let header = SuperblockHeader::parse(&first)?;
        if header.block_bytes as usize != dev.block_size() {
            return Err(Error::InvalidGeometry(format!(
                "superblock declares {}-byte blocks, device uses {}",
                header.block_bytes,
                dev.block_size()
            )));
        }
        let mut bytes = first;
        for k in 1..header.sb_blocks as u64 {
            bytes.extend_from_slice(&dev.read_block(k)?);
        }
        let cipher = Cipher::new(key);
        let sb = Superblock::decode(&bytes, &cipher)?;
        let cfg = DetConfig::new(sb.n, sb.m, sb.b as u64, sb.block_bytes as usize, sb.mode);
        let plan = cfg.plan()?;
        let params = cfg.trie()?;
        if params.n_p != sb.n_p || params.m_p != sb.m_p || plan.superblock.len != sb.sb_blocks as u64 {
            return Err(Error::BadMagic);
        }
        if dev.num_blocks() < plan.total_blocks {
            return Err(Error::InvalidGeometry("container is shorter than its layout".into()));
        }
        dev.set_reserved(plan.superblock.len);
        let [c0, c1, c2, c3] = sb.counters;
        let areas = match sb.mode {
            LayoutMode::Segmented => {
                let packed = |region: crate::layout::Region, slots, written| PackedArea {
                    start: region.start,
                    slots,
                    pack: plan.pack as u64,
                    node_bytes: params.node_bytes(),
                    written,
                    buf: None,
                };
                Areas::Seg(SegAreas {
                    data_main: CtrRegion { start: plan.data_main.start, len: plan.n, written: c0 },
                    data_holding: CtrRegion { start: plan.data_holding.start, len: plan.m, written: c1 },
                    pos_main: packed(plan.pos_main, params.n_p, c2),
                    pos_holding: packed(plan.pos_holding, params.m_p, c3),
                })
            }
            LayoutMode::Interleaved => {
                Areas::Ilv(IlvAreas { steps: c0, pos_main_written: c2, pos_holding_written: c3, pending: None })
            }
        };
        Ok(DetWoram {
            trie: Trie::restore(params, plan.m, plan.block_bytes, sb.root, sb.ip),
            core: Core { dev, cipher, plan, params, areas },
            i: sb.i,
            durable: false,
            audit: None,
            skip_refresh_at: None,
        })
    }

    pub fn set_durable(&mut self, durable: bool) {
        self.durable = durable;
    }

    /// Turns on the holding-slot audit.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Audit::new(self.core.plan.n, self.core.plan.m));
    }

    pub fn audit_report(&self) -> Option<AuditReport> {
        self.audit.as_ref().map(Audit::report)
    }

    /// Fault injection: at write step `step` every scheduled refresh rewrites
    /// the stale main copy instead of the fresh one. Segmented layout only.
    pub fn inject_skipped_refresh(&mut self, step: u64) {
        self.skip_refresh_at = Some(step);
    }

    pub fn counter(&self) -> u64 {
        self.i
    }

    pub fn position_counter(&self) -> u64 {
        self.trie.ip()
    }

    pub fn plan(&self) -> &LayoutPlan {
        &self.core.plan
    }

    pub fn trie_params(&self) -> &TrieParams {
        &self.core.params
    }

    pub fn cipher(&self) -> &Cipher {
        &self.core.cipher
    }

    /// Writes the superblock (and any partially filled pack blocks).
    pub fn persist_state(&mut self) -> Result<()> {
        self.core.flush()?;
        let plan = self.core.plan;
        let sb = Superblock {
            block_bytes: plan.block_bytes as u32,
            n: plan.n,
            m: plan.m,
            b: self.core.params.b as u32,
            n_p: self.core.params.n_p,
            m_p: self.core.params.m_p,
            mode: plan.mode,
            i: self.i,
            ip: self.trie.ip(),
            counters: self.core.counters(),
            sb_blocks: plan.superblock.len as u32,
            root: self.trie.root().clone(),
        };
        let bytes = sb.encode(&self.core.cipher)?;
        for (k, chunk) in bytes.chunks(plan.block_bytes).enumerate() {
            self.core.dev.write_block(plan.superblock.start + k as u64, chunk)?;
        }
        Ok(())
    }

    /// Persists state and hands back the device.
    pub fn close(mut self) -> Result<BlockDevice> {
        self.persist_state()?;
        self.core.dev.sync()?;
        Ok(self.core.dev)
    }

    fn io(&mut self) -> DataIo<'_> {
        DataIo {
            stale_refresh: self.skip_refresh_at == Some(self.i),
            step: self.i,
            core: &mut self.core,
            trie: &mut self.trie,
            audit: self.audit.as_mut(),
        }
    }

    fn write_interleaved(&mut self, a: u64, data: &[u8]) -> Result<()> {
        let (i, m, half) = (self.i, self.core.plan.m, self.core.plan.half_bytes());
        let u = i % m;
        let target = u / 2;
        let back_step = u % 2 == 0;
        self.core.begin_step(i);
        let mut io = self.io();
        // The front half is taken from the same state the back half was built
        // from, captured before this step's holding write.
        let snapshot = if back_step { None } else { Some(det_read(&mut io, target)?) };
        if let (false, Some(audit)) = (back_step, io.audit.as_deref_mut()) {
            audit.complete_snapshot(target);
        }
        io.write_holding(u, a, data)?;
        let old = match &snapshot {
            Some(s) if a == target => s.clone(),
            _ => io.read_main(a)?,
        };
        let (o, q) = bit_diff(data, &old);
        io.setpos(a, PosPointer::new(u, o, q))?;
        let main_half = match snapshot {
            Some(s) => s[..half].to_vec(),
            None => {
                let fresh = det_read(&mut io, target)?;
                if let Some(audit) = io.audit.as_deref_mut() {
                    audit.take_snapshot(target);
                }
                fresh[half..].to_vec()
            }
        };
        self.core.pending().main_half = Some(main_half);
        self.core.end_step()
    }
}

impl ObliviousStore for DetWoram {
    fn scheme(&self) -> &str {
        "det"
    }

    fn num_blocks(&self) -> u64 {
        self.core.plan.n
    }

    fn block_size(&self) -> usize {
        self.core.plan.block_bytes
    }

    fn read(&mut self, a: u64) -> Result<Vec<u8>> {
        check_addr(a, self.core.plan.n)?;
        det_read(&mut self.io(), a)
    }

    fn write(&mut self, a: u64, data: &[u8]) -> Result<()> {
        let plan = self.core.plan;
        check_addr(a, plan.n)?;
        check_len(data, plan.block_bytes)?;
        match plan.mode {
            LayoutMode::Segmented => {
                let i = self.i;
                det_write(&mut self.io(), plan.n, plan.m, i, a, data)?;
            }
            LayoutMode::Interleaved => self.write_interleaved(a, data)?,
        }
        self.i += 1;
        if self.durable {
            self.persist_state()?;
        }
        Ok(())
    }

    fn device(&self) -> &BlockDevice {
        &self.core.dev
    }

    fn trace_meta(&self) -> TraceMeta {
        let plan = &self.core.plan;
        let mut meta = TraceMeta::new("det", plan.block_bytes, self.core.dev.num_blocks())
            .with_param("mode", plan.mode.name())
            .with_param("n", plan.n)
            .with_param("m", plan.m)
            .with_param("b", self.core.params.b);
        meta.payload_start = plan.superblock.end();
        meta
    }
}
