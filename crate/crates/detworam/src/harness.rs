//! Seeded fuzzing against a reference map, and op-count benchmarks.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::woram::ObliviousStore;

/// Reference contents: every address not in the map reads as zeros.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    map: HashMap<u64, Vec<u8>>,
}

impl Oracle {
    pub fn new() -> Self {
        Oracle::default()
    }

    pub fn get(&self, a: u64, block_size: usize) -> Vec<u8> {
        self.map.get(&a).cloned().unwrap_or_else(|| vec![0; block_size])
    }

    pub fn set(&mut self, a: u64, data: Vec<u8>) {
        self.map.insert(a, data);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub op: u64,
    pub addr: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FuzzReport {
    pub scheme: String,
    pub ops: u64,
    pub seed: u64,
    pub reads: u64,
    pub writes: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<Mismatch>,
}

impl FuzzReport {
    pub fn pass(&self) -> bool {
        self.mismatches == 0
    }

    pub fn to_text(&self) -> String {
        format!(
            "fuzz {}: ops={} seed={} reads={} writes={} mismatches={} first={:?} -> {}\n",
            self.scheme,
            self.ops,
            self.seed,
            self.reads,
            self.writes,
            self.mismatches,
            self.first_mismatch,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// New content for `a`: usually random, sometimes the current value with
/// one bit flipped or unchanged, so that the one-bit diff sees small and
/// empty differences too.
fn next_value(rng: &mut ChaCha8Rng, current: &[u8]) -> Vec<u8> {
    let mut out = current.to_vec();
    match rng.gen_range(0..10) {
        0..=5 => rng.fill_bytes(&mut out),
        6..=7 => {
            let bit = rng.gen_range(0..8 * out.len());
            out[bit / 8] ^= 1 << (bit % 8);
        }
        8 => {}
        _ => out.fill(0),
    }
    out
}

/// Runs `ops` seeded random reads and writes against `store`, checking every
/// read against `oracle` (which is updated by the writes).
pub fn fuzz_with(store: &mut dyn ObliviousStore, oracle: &mut Oracle, ops: u64, seed: u64) -> Result<FuzzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = store.num_blocks();
    let bs = store.block_size();
    let hot = n.min(8);
    let mut report = FuzzReport {
        scheme: store.scheme().to_string(),
        ops,
        seed,
        reads: 0,
        writes: 0,
        mismatches: 0,
        first_mismatch: None,
    };
    for op in 0..ops {
        let a = if rng.gen_bool(0.3) { rng.gen_range(0..hot) } else { rng.gen_range(0..n) };
        if rng.gen_bool(0.5) {
            let data = next_value(&mut rng, &oracle.get(a, bs));
            store.write(a, &data)?;
            oracle.set(a, data);
            report.writes += 1;
        } else {
            report.reads += 1;
            if store.read(a)? != oracle.get(a, bs) {
                report.mismatches += 1;
                report.first_mismatch.get_or_insert(Mismatch { op, addr: a });
            }
        }
    }
    Ok(report)
}

pub fn fuzz(store: &mut dyn ObliviousStore, ops: u64, seed: u64) -> Result<FuzzReport> {
    fuzz_with(store, &mut Oracle::new(), ops, seed)
}

/// Reads every address and compares with the oracle.
pub fn verify_all(store: &mut dyn ObliviousStore, oracle: &Oracle) -> Result<FuzzReport> {
    let bs = store.block_size();
    let mut report = FuzzReport {
        scheme: store.scheme().to_string(),
        ops: store.num_blocks(),
        seed: 0,
        reads: 0,
        writes: 0,
        mismatches: 0,
        first_mismatch: None,
    };
    for a in 0..store.num_blocks() {
        report.reads += 1;
        if store.read(a)? != oracle.get(a, bs) {
            report.mismatches += 1;
            report.first_mismatch.get_or_insert(Mismatch { op: a, addr: a });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    SeqW,
    SeqR,
    RandW,
    RandR,
}

impl Workload {
    pub fn is_write(self) -> bool {
        matches!(self, Workload::SeqW | Workload::RandW)
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Workload::SeqW => "seqw",
            Workload::SeqR => "seqr",
            Workload::RandW => "randw",
            Workload::RandR => "randr",
        })
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seqw" => Ok(Workload::SeqW),
            "seqr" => Ok(Workload::SeqR),
            "randw" => Ok(Workload::RandW),
            "randr" => Ok(Workload::RandR),
            other => Err(format!("unknown workload {other:?} (seqw, seqr, randw, randr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub scheme: String,
    pub workload: Workload,
    pub ops: u64,
    pub seed: u64,
    pub logical_reads: u64,
    pub logical_writes: u64,
    /// Payload-area accesses.
    pub physical_reads: u64,
    pub physical_writes: u64,
    /// Superblock accesses, reported apart from the payload budget.
    pub state_reads: u64,
    pub state_writes: u64,
    pub elapsed_secs: f64,
    pub writes_per_write: f64,
    pub reads_per_op: f64,
}

impl BenchResult {
    pub fn to_text(&self) -> String {
        format!(
            "bench {} {}: ops={} seed={} logical r/w={}/{} physical r/w={}/{} state r/w={}/{} \
             writes/write={:.4} reads/op={:.4} elapsed={:.3}s\n",
            self.scheme,
            self.workload,
            self.ops,
            self.seed,
            self.logical_reads,
            self.logical_writes,
            self.physical_reads,
            self.physical_writes,
            self.state_reads,
            self.state_writes,
            self.writes_per_write,
            self.reads_per_op,
            self.elapsed_secs
        )
    }
}

/// Issues `ops` operations of one workload and reports the physical I/O.
pub fn bench(store: &mut dyn ObliviousStore, workload: Workload, ops: u64, seed: u64) -> Result<BenchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = store.num_blocks();
    let mut data = vec![0u8; store.block_size()];
    let before = store.device().stats();
    let start = Instant::now();
    for op in 0..ops {
        let a = match workload {
            Workload::SeqW | Workload::SeqR => op % n,
            Workload::RandW | Workload::RandR => rng.gen_range(0..n),
        };
        if workload.is_write() {
            rng.fill_bytes(&mut data);
            store.write(a, &data)?;
        } else {
            store.read(a)?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let io = store.device().stats().since(&before);
    let (lr, lw) = if workload.is_write() { (0, ops) } else { (ops, 0) };
    Ok(BenchResult {
        scheme: store.scheme().to_string(),
        workload,
        ops,
        seed,
        logical_reads: lr,
        logical_writes: lw,
        physical_reads: io.payload_reads(),
        physical_writes: io.payload_writes(),
        state_reads: io.reserved_reads,
        state_writes: io.reserved_writes,
        elapsed_secs: elapsed,
        writes_per_write: io.payload_writes() as f64 / lw.max(1) as f64,
        reads_per_op: io.payload_reads() as f64 / ops.max(1) as f64,
    })
}
