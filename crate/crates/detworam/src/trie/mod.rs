//! Heap-indexed b-ary trie that stores position map pointers and is its own
//! position map.
//!
//! Node `k` has children `b*k + 1 ..= b*k + b`. Nodes `1..=N_p` live in the
//! position WoORAM (node `k` at position-main index `k - 1`), the root is
//! client state, and data address `a` is the leaf slot at heap index
//! `N_p + 1 + a`.

mod pack;
mod woods;

pub use pack::{pack_capacity, pack_nodes, pack_raw, unpack_nodes, unpack_raw};
pub use woods::{NodeStore, Trie};

use crate::error::{Error, Result};
use crate::woram::{PosPointer, POINTER_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrieParams {
    pub n: u64,
    pub b: u64,
    /// Trie nodes stored in the position WoORAM (the root excluded).
    pub n_p: u64,
    /// Non-root nodes on every root-to-leaf path, which is also the number of
    /// node writes per pointer update.
    pub h: u32,
    /// Position holding size.
    pub m_p: u64,
}

/// Depth of heap node `k` in a `b`-ary heap (root at depth 0).
pub fn heap_depth(mut k: u128, b: u128) -> u32 {
    let mut d = 0;
    while k > 0 {
        k = (k - 1) / b;
        d += 1;
    }
    d
}

pub fn trie_params(n: u64, b: u64) -> Result<TrieParams> {
    if n < 2 || b < 2 {
        return Err(Error::InvalidGeometry(format!("trie needs N >= 2 and b >= 2 (N={n}, b={b})")));
    }
    let n_p = (n - 2) / (b - 1);
    let h = heap_depth(n_p as u128, b as u128);
    // Every data leaf sits at depth h or h + 1, so paths need at most one dummy.
    debug_assert!(heap_depth((n_p + n) as u128, b as u128) <= h + 1);
    debug_assert!(heap_depth((n_p + 1) as u128, b as u128) >= h);
    let m_p =
        n_p.checked_mul(h as u64).ok_or_else(|| Error::InvalidGeometry("position holding size overflows".into()))?;
    Ok(TrieParams { n, b, n_p, h, m_p })
}

impl TrieParams {
    /// Same trie with a different position holding size.
    pub fn with_holding(mut self, m_p: u64) -> Self {
        self.m_p = m_p;
        self
    }

    pub fn node_bytes(&self) -> usize {
        self.b as usize * POINTER_BYTES
    }

    pub fn data_heap(&self, a: u64) -> u64 {
        self.n_p + 1 + a
    }
}

/// Child indices from the root down to heap node `a`.
pub fn path_indices(a: u64, b: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = a;
    while k > 0 {
        out.push((k - 1) % b);
        k = (k - 1) / b;
    }
    out.reverse();
    out
}

/// Heap indices visited by a root-to-node walk, starting with the root.
pub fn path_heaps(indices: &[u64], b: u64) -> Vec<u64> {
    let mut heaps = Vec::with_capacity(indices.len() + 1);
    let mut k = 0;
    heaps.push(0);
    for &c in indices {
        k = k * b + c + 1;
        heaps.push(k);
    }
    heaps
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrieNode {
    pub slots: Vec<PosPointer>,
}

impl TrieNode {
    pub fn empty(b: u64) -> Self {
        TrieNode { slots: vec![PosPointer::NULL; b as usize] }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.slots.len() * POINTER_BYTES);
        for p in &self.slots {
            out.extend_from_slice(&p.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        TrieNode { slots: bytes.chunks_exact(POINTER_BYTES).map(PosPointer::from_bytes).collect() }
    }
}

fn ceil_lg(x: u128) -> u128 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros() as u128
    }
}

/// Terms of the half-block budget: `(h, lhs, rhs)` with
/// `lhs = (h + 1)(ceil(lg 2N) + ceil(lg B) + 1)` and `rhs = B / 2`, in bits.
pub fn feasibility_terms(n: u128, b: u128, block_bits: u128) -> (u32, u128, u128) {
    let n_p = n.saturating_sub(2) / (b - 1);
    let h = heap_depth(n_p, b);
    let lhs = (h as u128 + 1) * (ceil_lg(2 * n) + ceil_lg(block_bits) + 1);
    (h, lhs, block_bits / 2)
}

/// Whether a full trie path of theoretical-width pointers fits in half a block.
pub fn feasibility(n: u128, b: u128, block_bits: u128) -> bool {
    let (_, lhs, rhs) = feasibility_terms(n, b, block_bits);
    lhs <= rhs
}

/// Largest `N` in `[lo, hi]` that is feasible, assuming feasibility is
/// monotone and holds at `lo`.
pub fn feasibility_boundary(mut lo: u128, mut hi: u128, b: u128, block_bits: u128) -> u128 {
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if feasibility(mid, b, block_bits) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_examples() {
        assert_eq!(trie_params(1024, 2).unwrap().n_p, 1022);
        assert_eq!(trie_params(1024, 4).unwrap().n_p, 340);
        let p = trie_params(1 << 16, 64).unwrap();
        assert_eq!((p.n_p, p.h), (1040, 2));
        let p = trie_params(1 << 22, 64).unwrap();
        assert_eq!((p.n_p, p.h), (66576, 3));
        assert_eq!(trie_params(1024, 2).unwrap().h, 9);
        assert!(trie_params(1, 64).is_err());
    }

    #[test]
    fn small_trie_has_no_stored_nodes() {
        let p = trie_params(16, 64).unwrap();
        assert_eq!((p.n_p, p.h, p.m_p), (0, 0, 0));
    }

    #[test]
    fn path_examples() {
        assert!(path_indices(0, 4).is_empty());
        assert_eq!(path_indices(5, 4), vec![0, 0]);
        assert_eq!(path_indices(4, 2), vec![0, 1]);
        assert_eq!(path_heaps(&[0, 1], 2), vec![0, 1, 4]);
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasibility(1 << 20, 2, 1 << 15));
        assert!(!feasibility(1 << 10, 2, 1 << 6));
        let edge = 1u128 << 119;
        assert!(feasibility(edge, 2, 1 << 15));
        assert!(!feasibility(edge + 1, 2, 1 << 15));
    }
}
