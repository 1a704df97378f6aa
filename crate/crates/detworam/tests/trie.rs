use std::collections::HashMap;

use detworam::trie::{
    feasibility, feasibility_boundary, heap_depth, pack_capacity, pack_nodes, trie_params, unpack_nodes, NodeStore,
    Trie, TrieNode, TrieParams,
};
use detworam::{Cipher, CipherKey, Error, PosPointer, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain in-memory position areas that log every write.
struct MemNodes {
    main: Vec<Vec<u8>>,
    holding: Vec<Vec<u8>>,
    log: Vec<(char, u64)>,
}

impl MemNodes {
    fn new(p: &TrieParams) -> Self {
        MemNodes {
            main: vec![TrieNode::empty(p.b).to_bytes(); p.n_p as usize],
            holding: vec![vec![0; p.node_bytes()]; p.m_p as usize],
            log: Vec::new(),
        }
    }
}

impl NodeStore for MemNodes {
    fn read_pos_main(&mut self, k: u64) -> Result<Vec<u8>> {
        Ok(self.main[k as usize].clone())
    }

    fn read_pos_holding(&mut self, slot: u64) -> Result<Vec<u8>> {
        Ok(self.holding[slot as usize].clone())
    }

    fn write_pos_holding(&mut self, slot: u64, node: &[u8]) -> Result<()> {
        self.log.push(('h', slot));
        self.holding[slot as usize] = node.to_vec();
        Ok(())
    }

    fn write_pos_main(&mut self, k: u64, node: &[u8]) -> Result<()> {
        self.log.push(('m', k));
        self.main[k as usize] = node.to_vec();
        Ok(())
    }
}

const HOLDING: u64 = 1000;
const BLOCK: usize = 512;

fn pointer(rng: &mut ChaCha8Rng) -> PosPointer {
    PosPointer::new(rng.gen_range(0..HOLDING), rng.gen_range(0..8 * BLOCK as u32), rng.gen())
}

#[test]
fn params_examples() {
    let p = trie_params(1 << 16, 64).unwrap();
    assert_eq!((p.n_p, p.h), (1040, 2));
    let p = trie_params(1 << 22, 64).unwrap();
    assert_eq!((p.n_p, p.h), (66576, 3));
    assert_eq!(trie_params(1024, 2).unwrap().n_p, 1022);
    assert_eq!(trie_params(1024, 4).unwrap().n_p, 340);
    assert!(matches!(trie_params(1, 4), Err(Error::InvalidGeometry(_))));
}

#[test]
fn set_then_get_agrees_with_a_model() {
    for (n, b) in [(200u64, 4u64), (1000, 2), (64, 64), (3, 2)] {
        let p = trie_params(n, b).unwrap();
        let mut store = MemNodes::new(&p);
        let mut trie = Trie::new(p, HOLDING, BLOCK);
        let mut model = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(n);
        for _ in 0..600 {
            let a = rng.gen_range(0..n);
            let ptr = pointer(&mut rng);
            trie.setpos_data(&mut store, a, ptr).unwrap();
            model.insert(a, ptr);
        }
        for a in 0..n {
            let got = trie.getpos_data(&mut store, a).unwrap();
            assert_eq!(got, model.get(&a).copied().unwrap_or(PosPointer::NULL), "N={n} b={b} a={a}");
        }
    }
}

#[test]
fn every_update_writes_exactly_h_holding_slots() {
    let p = trie_params(1000, 3).unwrap();
    let mut store = MemNodes::new(&p);
    let mut trie = Trie::new(p, HOLDING, BLOCK);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for step in 0..500u64 {
        let before = store.log.len();
        let a = rng.gen_range(0..1000);
        trie.setpos_data(&mut store, a, pointer(&mut rng)).unwrap();
        let holding: Vec<u64> = store.log[before..].iter().filter(|e| e.0 == 'h').map(|e| e.1).collect();
        let expected: Vec<u64> = (step * p.h as u64..(step + 1) * p.h as u64).map(|i| i % p.m_p).collect();
        assert_eq!(holding, expected);
    }
    assert_eq!(trie.ip(), 500 * p.h as u64);
}

#[test]
fn write_sequences_do_not_depend_on_addresses() {
    let p = trie_params(500, 4).unwrap();
    let run = |seed: u64| {
        let mut store = MemNodes::new(&p);
        let mut trie = Trie::new(p, HOLDING, BLOCK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..300 {
            let a = if seed == 0 { 0 } else { rng.gen_range(0..500) };
            trie.setpos_data(&mut store, a, pointer(&mut rng)).unwrap();
        }
        store.log
    };
    let reference = run(0);
    assert_eq!(run(1), reference);
    assert_eq!(run(2), reference);
}

#[test]
fn corrupt_leaf_pointers_are_rejected() {
    let p = trie_params(100, 4).unwrap();
    let mut store = MemNodes::new(&p);
    let mut trie = Trie::new(p, HOLDING, BLOCK);
    trie.setpos_data(&mut store, 5, PosPointer::new(HOLDING + 3, 0, true)).unwrap();
    assert!(matches!(trie.getpos_data(&mut store, 5), Err(Error::CorruptPointer { .. })));
}

proptest! {
    #[test]
    fn trie_has_room_for_every_address(n in 2u64..1_000_000_000_000, b in 2u64..1024) {
        let p = trie_params(n, b).unwrap();
        prop_assert!((p.n_p as u128 + 1) * b as u128 >= p.n_p as u128 + n as u128);
        let first_leaf = p.n_p as u128 + 1;
        let last_leaf = p.n_p as u128 + n as u128;
        prop_assert!(heap_depth(first_leaf, b as u128) >= p.h);
        prop_assert!(heap_depth(last_leaf, b as u128) <= p.h + 1);
        prop_assert_eq!(heap_depth(p.n_p as u128, b as u128), p.h);
    }

    #[test]
    fn packed_nodes_round_trip(count in 1usize..8, seed in any::<u64>()) {
        let cipher = Cipher::new(&CipherKey::from_seed(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<TrieNode> = (0..count)
            .map(|_| TrieNode { slots: (0..64).map(|_| pointer(&mut rng)).collect() })
            .collect();
        prop_assert!(count <= pack_capacity(4096, 512));
        let blob = pack_nodes(&cipher, &nodes, 4096).unwrap();
        prop_assert_eq!(blob.len(), 4096);
        prop_assert_eq!(unpack_nodes(&cipher, &blob, 64, count).unwrap(), nodes);
    }
}

#[test]
fn pack_capacity_examples() {
    assert_eq!(pack_capacity(4096, 512), 7);
    assert_eq!(pack_capacity(512, 512), 0);
    let cipher = Cipher::new(&CipherKey::from_seed(1));
    let too_many = vec![TrieNode::empty(64); 8];
    assert!(pack_nodes(&cipher, &too_many, 4096).is_err());
}

#[test]
fn feasibility_boundary_for_binary_tries() {
    let edge = feasibility_boundary(1 << 10, 1 << 126, 2, 32768);
    assert_eq!(edge, 1 << 119);
    assert!(feasibility(edge, 2, 32768));
    assert!(!feasibility(edge + 1, 2, 32768));
}
