//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Tolerances are pinned here.

use std::process::ExitCode;
use std::time::Instant;

use detworam::baselines::{run_attack, AttackConfig, HiveWoram};
use detworam::harness::{fuzz_with, verify_all, Oracle};
use detworam::trie::feasibility_boundary;
use detworam::verifier::{changed_blocks, check_determinism, check_snapshot_freshness, check_write_budget};
use detworam::{AccessKind, BlockDevice, CipherKey, DetConfig, DetWoram, LayoutMode, ObliviousStore, ToyWoram, Trace};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const B: usize = 4096;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn det(cfg: DetConfig, key_seed: u64) -> DetWoram {
    let dev = BlockDevice::memory(cfg.block_bytes, cfg.plan().unwrap().total_blocks).unwrap();
    DetWoram::create(dev, &CipherKey::from_seed(key_seed), cfg).unwrap()
}

fn traced<S: ObliviousStore>(store: &mut S, run: impl FnOnce(&mut S)) -> Trace {
    store.device().start_trace(store.trace_meta());
    run(store);
    store.device().stop_trace().unwrap()
}

fn random_writes(store: &mut dyn ObliviousStore, writes: u64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0u8; store.block_size()];
    let n = store.num_blocks();
    for _ in 0..writes {
        rng.fill_bytes(&mut data);
        store.write(rng.gen_range(0..n), &data).unwrap();
    }
}

/// Twenty runs of 500 writes with different keys, addresses and contents.
fn determinism() -> Outcome {
    let cfg = DetConfig::new(256, 512, 64, B, LayoutMode::Segmented);
    let traces: Vec<Trace> = (0..20)
        .map(|run| {
            let mut s = det(cfg, 100 + run);
            traced(&mut s, |s| match run % 3 {
                0 => random_writes(s, 500, run),
                1 => (0..500).for_each(|i| s.write(i % 256, &vec![run as u8; B]).unwrap()),
                _ => (0..500).for_each(|_| s.write(7, &vec![0xa5; B]).unwrap()),
            })
        })
        .collect();
    let r = check_determinism(&traces).unwrap();
    outcome(r.pass, format!("20 runs x 500 writes, {} writes each; {}", traces[0].writes(), r.detail))
}

/// Every interleaved write is exactly two writes at consecutive indices.
fn interleaved_pairs() -> Outcome {
    let cfg = DetConfig::new(1024, 2048, 64, B, LayoutMode::Interleaved);
    let mut s = det(cfg, 2);
    let writes = 10_000u64;
    let t = traced(&mut s, |s| random_writes(s, writes, 2));
    let w: Vec<u64> = t
        .events
        .iter()
        .filter(|e| e.kind == AccessKind::Write && e.index >= t.meta.payload_start)
        .map(|e| e.index)
        .collect();
    let pairs_ok = w.len() as u64 == 2 * writes && w.chunks(2).all(|p| p[1] == p[0] + 1);
    outcome(
        pairs_ok,
        format!("{} payload writes for {writes} logical writes, all pairs consecutive: {pairs_ok}", w.len()),
    )
}

fn write_budget() -> Outcome {
    let cfg = DetConfig::new(4096, 8192, 64, B, LayoutMode::Segmented);
    let mut s = det(cfg, 3);
    let writes = 100_000;
    let t = traced(&mut s, |s| random_writes(s, writes, 3));
    let r = check_write_budget(&t, writes, 2.5);
    outcome(r.pass, format!("average {:.4} physical writes per write (limit 2.5)", r.stats["average"]))
}

fn audit() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for mode in [LayoutMode::Segmented, LayoutMode::Interleaved] {
        for workload in ["same", "round-robin", "random"] {
            let cfg = DetConfig::new(1024, 2048, 64, B, mode);
            let mut s = det(cfg, 4);
            s.enable_audit();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut data = vec![0u8; B];
            for i in 0..100_000u64 {
                rng.fill_bytes(&mut data[..16]);
                let a = match workload {
                    "same" => 0,
                    "round-robin" => i % 1024,
                    _ => rng.gen_range(0..1024),
                };
                s.write(a, &data).unwrap();
            }
            let r = s.audit_report().unwrap();
            pass &= r.violations == 0 && r.holding_writes == 100_000;
            details.push(format!("{}/{workload}={}", mode.name(), r.violations));
        }
    }
    outcome(pass, format!("violations over 1e5 writes: {}", details.join(" ")))
}

fn fuzz_det_with_reopen(cfg: DetConfig, ops: u64) -> (u64, u64) {
    let key = CipherKey::from_seed(5);
    let mut s = det(cfg, 5);
    let mut oracle = Oracle::new();
    let first = fuzz_with(&mut s, &mut oracle, ops / 2, 50).unwrap();
    let dev = s.close().unwrap();
    let mut s = DetWoram::open(dev, &key).unwrap();
    let second = fuzz_with(&mut s, &mut oracle, ops - ops / 2, 51).unwrap();
    let full = verify_all(&mut s, &oracle).unwrap();
    (first.mismatches + second.mismatches + full.mismatches, first.reads + second.reads + full.reads)
}

fn fuzz_all() -> Outcome {
    let ops = 100_000;
    let key = CipherKey::from_seed(5);
    let mut results = Vec::new();

    let mut toy = ToyWoram::create(BlockDevice::memory(B, 2048).unwrap(), &key, 1024).unwrap();
    let mut oracle = Oracle::new();
    let r = fuzz_with(&mut toy, &mut oracle, ops, 50).unwrap();
    let full = verify_all(&mut toy, &oracle).unwrap();
    results.push(("toy", r.mismatches + full.mismatches, r.reads + full.reads));

    let (m, r) = fuzz_det_with_reopen(DetConfig::new(1024, 3072, 64, B, LayoutMode::Segmented), ops);
    results.push(("seg", m, r));
    let (m, r) = fuzz_det_with_reopen(DetConfig::new(1024, 2048, 64, B, LayoutMode::Interleaved), ops);
    results.push(("ilv", m, r));

    let mut hive = HiveWoram::create(BlockDevice::memory(B, 2048).unwrap(), &key, 1024, 3, 5).unwrap();
    let mut oracle = Oracle::new();
    let r = fuzz_with(&mut hive, &mut oracle, ops, 50).unwrap();
    let full = verify_all(&mut hive, &oracle).unwrap();
    results.push(("hive", r.mismatches + full.mismatches, r.reads + full.reads));

    let pass = results.iter().all(|&(_, m, _)| m == 0);
    let detail = results.iter().map(|(s, m, r)| format!("{s}: {m}/{r}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("mismatches/reads over 1e5 ops (det closed and reopened midway): {detail}"))
}

fn feasibility() -> Outcome {
    let n = feasibility_boundary(1 << 10, 1 << 126, 2, 32768);
    let x = n as f64;
    outcome(
        (1e35..=1e36).contains(&x),
        format!("largest feasible N for b=2, B=4096 bytes: {x:.4e} (expected in [1e35, 1e36])"),
    )
}

fn datalair() -> Outcome {
    let r = run_attack(&AttackConfig::new(64, 3, 1_000_000, 7)).unwrap();
    outcome(
        r.pass,
        format!(
            "p0={:.6} p1={:.6} advantage={:.6} ci99=[{:.6}, {:.6}] bound={:.6} aborted={}+{}",
            r.seq0.p_event,
            r.seq1.p_event,
            r.advantage,
            r.advantage_ci.0,
            r.advantage_ci.1,
            r.bound,
            r.seq0.aborted,
            r.seq1.aborted
        ),
    )
}

fn hive_exact() -> Outcome {
    let (n, writes, k) = (1024u64, 1_000_000u64, 3usize);
    let mut hive =
        HiveWoram::create(BlockDevice::memory(64, 2 * n).unwrap(), &CipherKey::from_seed(8), n, k, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut data = vec![0u8; hive.block_size()];
    let mut exact = true;
    for _ in 0..writes {
        let before = hive.device().stats();
        rng.fill_bytes(&mut data);
        hive.write(rng.gen_range(0..n), &data).unwrap();
        let d = hive.device().stats().since(&before);
        exact &= d.writes == k as u64 && d.reads == k as u64;
    }
    let max = hive.max_stash();
    let warn = if max > 50 { " WARN: stash exceeded 50" } else { "" };
    outcome(exact, format!("{writes} writes each touching exactly {k} slots: {exact}; max stash {max}{warn}"))
}

fn read_budget() -> Outcome {
    let mut avgs = Vec::new();
    for lg in [16u32, 22] {
        let n = 1u64 << lg;
        let cfg = DetConfig::new(n, 2 * n, 64, B, LayoutMode::Segmented);
        let mut s = DetWoram::create_sparse(&CipherKey::from_seed(9), cfg).unwrap();
        random_writes(&mut s, 2_000, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let before = s.device().stats();
        let reads = 2_000u64;
        for _ in 0..reads {
            s.read(rng.gen_range(0..n)).unwrap();
        }
        avgs.push(s.device().stats().since(&before).payload_reads() as f64 / reads as f64);
    }
    let diff = avgs[1] - avgs[0];
    outcome(
        diff <= 2.0,
        format!("reads/read N=2^16: {:.3}, N=2^22: {:.3}, difference {diff:.3} (limit 2)", avgs[0], avgs[1]),
    )
}

fn snapshots<S: ObliviousStore>(mut s: S, sequential: bool, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s.num_blocks();
    let mut data = vec![0u8; s.block_size()];
    let mut out = vec![s.device().image().unwrap()];
    for i in 0..1000u64 {
        rng.fill_bytes(&mut data);
        let a = if sequential { i % n } else { rng.gen_range(0..n) };
        s.write(a, &data).unwrap();
        if (i + 1) % 100 == 0 {
            out.push(s.device().image().unwrap());
        }
    }
    out
}

fn snapshot_freshness() -> Outcome {
    let cfg = DetConfig::new(256, 512, 64, B, LayoutMode::Segmented);
    let det_a = snapshots(det(cfg, 10), true, 10);
    let det_b = snapshots(det(cfg, 11), false, 11);
    let det_r = check_snapshot_freshness(&det_a, &det_b, B);
    let hive = |seed| {
        HiveWoram::create(BlockDevice::memory(B, 512).unwrap(), &CipherKey::from_seed(seed), 256, 3, seed).unwrap()
    };
    let hive_a = snapshots(hive(10), true, 10);
    let hive_b = snapshots(hive(11), false, 11);
    let hive_r = check_snapshot_freshness(&hive_a, &hive_b, B);
    let per_interval = changed_blocks(&det_a[0], &det_a[1], B).len();
    outcome(
        det_r.pass && !hive_r.pass,
        format!(
            "det changed sets identical: {} ({per_interval} blocks per 100 writes); hive identical: {} (first differing interval {:?})",
            det_r.pass, hive_r.pass, hive_r.first_offense
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("deterministic write locations", determinism),
        ("interleaved two consecutive writes", interleaved_pairs),
        ("amortized write budget", write_budget),
        ("holding-slot audit", audit),
        ("fuzz against reference map", fuzz_all),
        ("feasibility boundary", feasibility),
        ("DataLair distinguisher", datalair),
        ("HiVE exact k writes", hive_exact),
        ("logarithmic read budget", read_budget),
        ("snapshot freshness", snapshot_freshness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += !o.pass as u32;
        println!(
            "criterion {:>2} {name}: {} ({}) [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed as usize, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
