use detworam::baselines::HiveWoram;
use detworam::harness::{bench, fuzz, Workload};
use detworam::verifier::{
    changed_blocks, check_determinism, check_read_budget, check_snapshot_freshness, check_write_budget, ReadBound,
    VerifierReport,
};
use detworam::{
    BlockDevice, CipherKey, DetConfig, DetWoram, Error, LayoutMode, ObliviousStore, Result, Trace, TraceMeta,
};

fn det(seed: u64) -> DetWoram {
    let cfg = DetConfig::new(64, 128, 8, 512, LayoutMode::Segmented);
    let dev = BlockDevice::memory(512, cfg.plan().unwrap().total_blocks).unwrap();
    DetWoram::create(dev, &CipherKey::from_seed(seed), cfg).unwrap()
}

fn hive(seed: u64) -> HiveWoram {
    HiveWoram::create(BlockDevice::memory(512, 128).unwrap(), &CipherKey::from_seed(seed), 64, 3, seed).unwrap()
}

fn bench_trace(store: &mut dyn ObliviousStore, workload: Workload, seed: u64) -> Trace {
    store.device().start_trace(store.trace_meta());
    bench(store, workload, 300, seed).unwrap();
    store.device().stop_trace().unwrap()
}

#[test]
fn determinism_separates_det_from_hive() {
    let det_traces = vec![bench_trace(&mut det(1), Workload::SeqW, 1), bench_trace(&mut det(2), Workload::RandW, 2)];
    assert!(check_determinism(&det_traces).unwrap().pass);
    let hive_traces = vec![bench_trace(&mut hive(1), Workload::SeqW, 1), bench_trace(&mut hive(2), Workload::RandW, 2)];
    let r = check_determinism(&hive_traces).unwrap();
    assert!(!r.pass);
    assert!(r.first_offense.is_some());
    assert!(matches!(
        check_determinism(&[det_traces[0].clone(), hive_traces[0].clone()]),
        Err(Error::GeometryMismatch(_))
    ));
}

#[test]
fn budgets_on_real_traces() {
    let mut s = det(3);
    let w = bench_trace(&mut s, Workload::RandW, 3);
    let r = check_write_budget(&w, 300, 3.0);
    assert!(r.pass, "{:?}", r);
    assert!(!check_write_budget(&w, 300, 1.0).pass);
    let rd = bench_trace(&mut s, Workload::RandR, 4);
    let bound = ReadBound { c: 2.0, c0: 2.0, b: 8, n: 64 };
    assert_eq!(bound.limit(), 6.0);
    assert!(check_read_budget(&rd, 300, bound).pass);
    let tight = ReadBound { c: 0.0, c0: 1.0, b: 8, n: 64 };
    let fail = check_read_budget(&rd, 300, tight);
    assert!(!fail.pass);
    assert!(fail.first_offense.is_some());
}

fn snapshots(store: &mut dyn ObliviousStore, seq: bool) -> Result<Vec<Vec<u8>>> {
    let n = store.num_blocks();
    let mut out = vec![store.device().image()?];
    for i in 0..200u64 {
        let a = if seq { i % n } else { (i * 37 + 11) % n };
        store.write(a, &vec![i as u8; store.block_size()])?;
        if (i + 1) % 50 == 0 {
            out.push(store.device().image()?);
        }
    }
    Ok(out)
}

#[test]
fn snapshot_freshness_separates_det_from_hive() {
    let a = snapshots(&mut det(5), true).unwrap();
    let b = snapshots(&mut det(6), false).unwrap();
    assert!(check_snapshot_freshness(&a, &b, 512).pass);
    let a = snapshots(&mut hive(5), true).unwrap();
    let b = snapshots(&mut hive(6), false).unwrap();
    let r = check_snapshot_freshness(&a, &b, 512);
    assert!(!r.pass);
    assert_eq!(r.first_offense, Some(0));
    assert!(!check_snapshot_freshness(&a, &b[..2], 512).pass);
}

#[test]
fn changed_blocks_example() {
    let before = [0u8; 12];
    let mut after = before;
    after[5] = 1;
    after[11] = 1;
    assert_eq!(changed_blocks(&before, &after, 4), vec![1, 2]);
}

#[test]
fn report_renders_text_and_json() {
    let mut report = VerifierReport::new("det");
    let t = Trace::new(TraceMeta::new("det", 512, 10));
    report.push(check_write_budget(&t, 0, 2.0));
    assert!(report.pass());
    assert!(report.to_text().starts_with("det write-budget: PASS"));
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["checks"][0]["name"], "write-budget");
}

#[test]
fn fuzz_catches_a_broken_store() {
    /// Drops every write to one address.
    struct Forgetful(DetWoram);
    impl ObliviousStore for Forgetful {
        fn scheme(&self) -> &str {
            "forgetful"
        }
        fn num_blocks(&self) -> u64 {
            self.0.num_blocks()
        }
        fn block_size(&self) -> usize {
            self.0.block_size()
        }
        fn read(&mut self, a: u64) -> Result<Vec<u8>> {
            self.0.read(a)
        }
        fn write(&mut self, a: u64, data: &[u8]) -> Result<()> {
            if a == 3 {
                return Ok(());
            }
            self.0.write(a, data)
        }
        fn device(&self) -> &BlockDevice {
            self.0.device()
        }
        fn trace_meta(&self) -> TraceMeta {
            self.0.trace_meta()
        }
    }
    let report = fuzz(&mut Forgetful(det(7)), 2_000, 7).unwrap();
    assert!(!report.pass());
    assert_eq!(report.first_mismatch.unwrap().addr, 3);
    assert!(fuzz(&mut det(7), 2_000, 7).unwrap().pass());
}
