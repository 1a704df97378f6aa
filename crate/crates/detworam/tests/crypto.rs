use detworam::stats::chi_square_uniform;
use detworam::{
    BlockDevice, Cipher, CipherKey, CryptoError, CtrContext, DetConfig, DetWoram, LayoutMode, ObliviousStore,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Byte histogram of ciphertexts of highly structured plaintexts.
fn byte_uniformity(cts: impl Iterator<Item = Vec<u8>>) -> f64 {
    let mut counts = [0u64; 256];
    for ct in cts {
        for b in ct {
            counts[b as usize] += 1;
        }
    }
    chi_square_uniform(&counts).1
}

#[test]
fn ctr_ciphertexts_of_structured_plaintexts_look_uniform() {
    let c = Cipher::new(&CipherKey::from_seed(1));
    let p = byte_uniformity((0..10_000u64).map(|i| {
        let pt = vec![(i % 3) as u8; 64];
        c.ctr_encrypt(CtrContext::new(i / 100, i % 100), &pt).unwrap()
    }));
    assert!(p > 0.001, "chi-square p-value {p}");
}

#[test]
fn iv_ciphertexts_of_one_plaintext_look_uniform() {
    let c = Cipher::new(&CipherKey::from_seed(2));
    let p = byte_uniformity((0..10_000).map(|_| c.iv_encrypt(&[0u8; 47], 64).unwrap()));
    assert!(p > 0.001, "chi-square p-value {p}");
}

#[test]
fn equal_plaintexts_under_distinct_contexts_differ() {
    let c = Cipher::new(&CipherKey::from_seed(3));
    let zero = [0u8; 32];
    let mut seen = std::collections::HashSet::new();
    for e in 0..50 {
        for i in 0..50 {
            assert!(seen.insert(c.ctr_encrypt(CtrContext::new(e, i), &zero).unwrap()));
        }
    }
}

#[test]
fn no_counter_context_repeats_over_many_writes() {
    for mode in [LayoutMode::Segmented, LayoutMode::Interleaved] {
        let cfg = DetConfig::new(64, 128, 4, 512, mode);
        let dev = BlockDevice::memory(512, cfg.plan().unwrap().total_blocks).unwrap();
        let mut s = DetWoram::create_checked(dev, &CipherKey::from_seed(4), cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut data = vec![0u8; 512];
        let writes = 100_000u64;
        for _ in 0..writes {
            rng.fill_bytes(&mut data[..8]);
            s.write(rng.gen_range(0..64), &data).unwrap();
        }
        let contexts = s.cipher().contexts_seen().unwrap() as u64;
        assert!(contexts >= writes, "{mode:?}: only {contexts} contexts recorded");
    }
}

#[test]
fn reuse_is_reported_with_its_context() {
    let c = Cipher::new(&CipherKey::from_seed(5)).with_reuse_check();
    c.ctr_encrypt(CtrContext::new(7, 7), &[0; 8]).unwrap();
    assert_eq!(c.ctr_encrypt(CtrContext::new(7, 7), &[1; 8]), Err(CryptoError::ContextReuse { epoch: 7, index: 7 }));
}

#[test]
fn key_files_round_trip_and_reject_bad_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("key");
    let k = CipherKey::generate();
    k.save(&path).unwrap();
    assert_eq!(CipherKey::load(&path).unwrap(), k);
    std::fs::write(&path, [0u8; 31]).unwrap();
    assert!(CipherKey::load(&path).is_err());
    assert_eq!(format!("{k:?}"), "CipherKey(..)");
}
