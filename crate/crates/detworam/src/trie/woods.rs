use crate::error::Result;
use crate::woram::{bit_at, det_read, det_write, refresh_step, PosPointer, WoramIo};

use super::{path_heaps, path_indices, TrieNode, TrieParams};

/// Storage for serialized trie nodes: the areas of the position WoORAM.
/// Position-main index `k` holds heap node `k + 1`.
pub trait NodeStore {
    fn read_pos_main(&mut self, k: u64) -> Result<Vec<u8>>;
    fn read_pos_holding(&mut self, slot: u64) -> Result<Vec<u8>>;
    fn write_pos_holding(&mut self, slot: u64, node: &[u8]) -> Result<()>;
    fn write_pos_main(&mut self, k: u64, node: &[u8]) -> Result<()>;
}

/// Path being rewritten by an in-progress pointer update. While it is set,
/// lookups of any node on it use these in-memory copies.
#[derive(Debug, Clone)]
struct ActivePath {
    heaps: Vec<u64>,
    indices: Vec<u64>,
    nodes: Vec<TrieNode>,
}

impl ActivePath {
    fn level_of(&self, heap: u64) -> Option<usize> {
        self.heaps.iter().position(|&h| h == heap)
    }
}

/// Client side of the trie: the root node, the position write counter `i_p`
/// and the in-flight path.
#[derive(Debug, Clone)]
pub struct Trie {
    params: TrieParams,
    /// Holding size of the data WoORAM, for leaf pointer validation.
    data_holding: u64,
    block_bytes: usize,
    root: TrieNode,
    ip: u64,
    active: Option<ActivePath>,
}

impl Trie {
    pub fn new(params: TrieParams, data_holding: u64, block_bytes: usize) -> Self {
        Trie::restore(params, data_holding, block_bytes, TrieNode::empty(params.b), 0)
    }

    pub fn restore(params: TrieParams, data_holding: u64, block_bytes: usize, root: TrieNode, ip: u64) -> Self {
        Trie { params, data_holding, block_bytes, root, ip, active: None }
    }

    pub fn params(&self) -> &TrieParams {
        &self.params
    }

    pub fn root(&self) -> &TrieNode {
        &self.root
    }

    /// Position WoORAM write counter.
    pub fn ip(&self) -> u64 {
        self.ip
    }

    fn load_child<S: NodeStore>(&self, store: &mut S, heap: u64, ptr: PosPointer) -> Result<TrieNode> {
        let node_bytes = self.params.node_bytes();
        let ptr = ptr.validate(self.params.m_p, node_bytes)?;
        let main = store.read_pos_main(heap - 1)?;
        let bytes = match ptr.holding_slot() {
            Some(slot) if bit_at(&main, ptr.offset as u32) != ptr.bit => store.read_pos_holding(slot)?,
            _ => main,
        };
        Ok(TrieNode::from_bytes(&bytes))
    }

    fn current(&self, heap: u64) -> Option<&TrieNode> {
        let act = self.active.as_ref()?;
        act.level_of(heap).map(|l| &act.nodes[l])
    }

    /// Nodes `[B_0, .., B_l]` along a root-to-node index list.
    pub fn path_nodes<S: NodeStore>(&self, store: &mut S, indices: &[u64]) -> Result<Vec<TrieNode>> {
        let heaps = path_heaps(indices, self.params.b);
        let mut out = vec![self.current(0).unwrap_or(&self.root).clone()];
        for (lvl, &c) in indices.iter().enumerate() {
            let heap = heaps[lvl + 1];
            let node = match self.current(heap) {
                Some(n) => n.clone(),
                None => self.load_child(store, heap, out[lvl].slots[c as usize])?,
            };
            out.push(node);
        }
        Ok(out)
    }

    /// Pointer stored in the parent of heap node `heap`.
    fn pointer_to<S: NodeStore>(&self, store: &mut S, heap: u64) -> Result<PosPointer> {
        let indices = path_indices(heap, self.params.b);
        let (last, walk) = indices.split_last().expect("heap node below the root");
        let heaps = path_heaps(walk, self.params.b);
        let mut node: Option<TrieNode> = None;
        for (lvl, &h) in heaps.iter().enumerate() {
            let next = match self.current(h) {
                Some(n) => n.clone(),
                None if lvl == 0 => self.root.clone(),
                None => {
                    let parent = node.as_ref().expect("parent loaded");
                    self.load_child(store, h, parent.slots[walk[lvl - 1] as usize])?
                }
            };
            node = Some(next);
        }
        Ok(node.expect("root visited").slots[*last as usize])
    }

    /// Pointer for data address `a`.
    pub fn getpos_data<S: NodeStore>(&self, store: &mut S, a: u64) -> Result<PosPointer> {
        self.pointer_to(store, self.params.data_heap(a))?.validate(self.data_holding, self.block_bytes)
    }

    /// Pointer to trie node `heap` (in `1..=N_p`).
    pub fn getpos_node<S: NodeStore>(&self, store: &mut S, heap: u64) -> Result<PosPointer> {
        self.pointer_to(store, heap)?.validate(self.params.m_p, self.params.node_bytes())
    }

    /// Sets the pointer of data address `a` by rewriting its path bottom-up
    /// through the position WoORAM, padded to exactly `h` node writes.
    pub fn setpos_data<S: NodeStore>(&mut self, store: &mut S, a: u64, ptr: PosPointer) -> Result<()> {
        let p = self.params;
        let indices = path_indices(p.data_heap(a), p.b);
        let (leaf_slot, walk) = indices.split_last().expect("data leaves lie below the root");
        let l = walk.len();
        debug_assert!(l as u32 + 1 >= p.h && l as u32 <= p.h);
        self.active = None;
        let mut nodes = self.path_nodes(store, walk)?;
        nodes[l].slots[*leaf_slot as usize] = ptr;
        self.active = Some(ActivePath { heaps: path_heaps(walk, p.b), indices: walk.to_vec(), nodes });

        for level in (1..=l).rev() {
            let act = self.active.as_ref().expect("active path");
            let k = act.heaps[level] - 1;
            let bytes = act.nodes[level].to_bytes();
            let ip = self.ip;
            det_write(&mut PosIo { trie: self, store, level }, p.n_p, p.m_p, ip, k, &bytes)?;
            self.ip += 1;
        }
        for _ in l as u32..p.h {
            let ip = self.ip;
            store.write_pos_holding(ip % p.m_p, &vec![0u8; p.node_bytes()])?;
            refresh_step(&mut PosIo { trie: self, store, level: 0 }, p.n_p, p.m_p, ip)?;
            self.ip += 1;
        }
        let act = self.active.take().expect("active path");
        self.root = act.nodes.into_iter().next().expect("root on path");
        Ok(())
    }
}

/// Position WoORAM view used while writing the node at `level` of the active path.
struct PosIo<'a, S> {
    trie: &'a mut Trie,
    store: &'a mut S,
    level: usize,
}

impl<S: NodeStore> WoramIo for PosIo<'_, S> {
    fn read_main(&mut self, k: u64) -> Result<Vec<u8>> {
        self.store.read_pos_main(k)
    }

    fn read_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        self.store.read_pos_holding(slot)
    }

    fn write_holding(&mut self, slot: u64, _k: u64, node: &[u8]) -> Result<()> {
        self.store.write_pos_holding(slot, node)
    }

    fn write_main(&mut self, k: u64, node: &[u8]) -> Result<()> {
        self.store.write_pos_main(k, node)
    }

    fn getpos(&mut self, k: u64) -> Result<PosPointer> {
        self.trie.getpos_node(self.store, k + 1)
    }

    fn setpos(&mut self, k: u64, ptr: PosPointer) -> Result<()> {
        let act = self.trie.active.as_mut().expect("setpos outside a path update");
        debug_assert_eq!(act.heaps[self.level], k + 1);
        let parent = self.level - 1;
        let slot = act.indices[parent] as usize;
        act.nodes[parent].slots[slot] = ptr;
        Ok(())
    }

    fn fresh(&mut self, k: u64) -> Result<Vec<u8>> {
        match self.trie.current(k + 1) {
            Some(node) => Ok(node.to_bytes()),
            None => det_read(self, k),
        }
    }
}
