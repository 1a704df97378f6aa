//! Checks over physical traces and device snapshots. Nothing here looks at
//! plaintext: every check is a function of locations and ciphertext bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::device::{filter_writes, AccessKind, Trace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub stats: BTreeMap<String, f64>,
    /// Sequence number of the first offending event (or snapshot interval).
    pub first_offense: Option<u64>,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        CheckResult { name: name.into(), pass, detail, stats: BTreeMap::new(), first_offense: None }
    }

    fn stat(mut self, key: &str, value: f64) -> Self {
        self.stats.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifierReport {
    pub scheme: String,
    pub checks: Vec<CheckResult>,
}

impl VerifierReport {
    pub fn new(scheme: &str) -> Self {
        VerifierReport { scheme: scheme.into(), checks: Vec::new() }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = write!(s, "{} {}: {}", self.scheme, c.name, if c.pass { "PASS" } else { "FAIL" });
            for (k, v) in &c.stats {
                let _ = write!(s, " {k}={v}");
            }
            if let Some(e) = c.first_offense {
                let _ = write!(s, " first_offense={e}");
            }
            let _ = writeln!(s, " ({})", c.detail);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Passes iff every trace has the same sequence of write locations.
pub fn check_determinism(traces: &[Trace]) -> Result<CheckResult> {
    let Some(first) = traces.first() else {
        return Ok(CheckResult::new("determinism", true, "no traces".into()));
    };
    for t in &traces[1..] {
        let (a, b) = (&first.meta, &t.meta);
        if a.scheme != b.scheme || a.block_bytes != b.block_bytes || a.num_blocks != b.num_blocks {
            return Err(Error::GeometryMismatch(format!("{:?} vs {:?}", a.header(), b.header())));
        }
    }
    let reference = filter_writes(first);
    let mut result = CheckResult::new("determinism", true, String::new());
    for (j, t) in traces.iter().enumerate().skip(1) {
        let w = filter_writes(t);
        let diverge =
            reference.events.iter().zip(&w.events).position(|(x, y)| x.index != y.index).or_else(|| {
                (reference.events.len() != w.events.len()).then(|| reference.events.len().min(w.events.len()))
            });
        if let Some(pos) = diverge {
            result.pass = false;
            result.detail = format!("trace {j} diverges from trace 0 at write {pos}");
            result.first_offense = Some(w.events.get(pos).map_or(pos as u64, |e| e.seq));
            break;
        }
    }
    if result.pass {
        result.detail = format!("{} traces with identical write locations", traces.len());
    }
    Ok(result.stat("traces", traces.len() as f64).stat("writes", reference.events.len() as f64))
}

/// Payload writes per logical write against `bound`.
pub fn check_write_budget(trace: &Trace, logical_writes: u64, bound: f64) -> CheckResult {
    let start = trace.meta.payload_start;
    let writes: Vec<_> = trace.events.iter().filter(|e| e.kind == AccessKind::Write && e.index >= start).collect();
    let avg = writes.len() as f64 / logical_writes.max(1) as f64;
    let pass = avg <= bound;
    let mut r = CheckResult::new(
        "write-budget",
        pass,
        format!("{} payload writes for {logical_writes} logical writes", writes.len()),
    )
    .stat("average", avg)
    .stat("bound", bound);
    if !pass {
        let allowed = (bound * logical_writes as f64).floor() as usize;
        r.first_offense = writes.get(allowed).map(|e| e.seq);
    }
    r
}

/// Constants of a read bound `c * ceil(log_b N) + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadBound {
    pub c: f64,
    pub c0: f64,
    pub b: u64,
    pub n: u64,
}

impl ReadBound {
    pub fn limit(&self) -> f64 {
        let mut levels = 0u32;
        let mut reach = 1u128;
        while reach < self.n as u128 {
            reach *= self.b as u128;
            levels += 1;
        }
        self.c * levels as f64 + self.c0
    }
}

/// Physical reads per logical read against a logarithmic bound.
pub fn check_read_budget(trace: &Trace, logical_reads: u64, bound: ReadBound) -> CheckResult {
    let reads: Vec<_> = trace.events.iter().filter(|e| e.kind == AccessKind::Read).collect();
    let avg = reads.len() as f64 / logical_reads.max(1) as f64;
    let limit = bound.limit();
    let pass = avg <= limit;
    let mut r = CheckResult::new(
        "read-budget",
        pass,
        format!("{} physical reads for {logical_reads} logical reads", reads.len()),
    )
    .stat("average", avg)
    .stat("limit", limit);
    if !pass {
        let allowed = (limit * logical_reads as f64).floor() as usize;
        r.first_offense = reads.get(allowed).map(|e| e.seq);
    }
    r
}

/// Indices of blocks whose bytes differ between two images.
pub fn changed_blocks(before: &[u8], after: &[u8], block_bytes: usize) -> Vec<u64> {
    before
        .chunks(block_bytes)
        .zip(after.chunks(block_bytes))
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i as u64)
        .collect()
}

/// Passes iff, between every pair of consecutive snapshots, the same set of
/// blocks changed in both sequences.
pub fn check_snapshot_freshness(seq_a: &[Vec<u8>], seq_b: &[Vec<u8>], block_bytes: usize) -> CheckResult {
    let intervals = seq_a.len().min(seq_b.len()).saturating_sub(1);
    let mut r = CheckResult::new("snapshot", true, String::new());
    let mut total_changed = 0usize;
    if seq_a.len() != seq_b.len() {
        r.pass = false;
        r.detail = format!("snapshot counts differ ({} vs {})", seq_a.len(), seq_b.len());
    }
    for k in 0..intervals {
        let a = changed_blocks(&seq_a[k], &seq_a[k + 1], block_bytes);
        let b = changed_blocks(&seq_b[k], &seq_b[k + 1], block_bytes);
        total_changed += a.len();
        if a != b && r.pass {
            r.pass = false;
            r.first_offense = Some(k as u64);
            r.detail = format!("interval {k}: {} vs {} changed blocks, sets differ", a.len(), b.len());
        }
    }
    if r.pass {
        r.detail = format!("{intervals} intervals with identical changed-block sets");
    }
    r.stat("intervals", intervals as f64).stat("changed_blocks", total_changed as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{TraceEvent, TraceMeta};

    fn trace(kinds: &[(AccessKind, u64)]) -> Trace {
        let mut t = Trace::new(TraceMeta::new("x", 16, 100));
        for (seq, &(kind, index)) in kinds.iter().enumerate() {
            t.events.push(TraceEvent { seq: seq as u64, kind, index });
        }
        t
    }

    #[test]
    fn determinism_ignores_reads_and_reports_divergence() {
        use AccessKind::*;
        let a = trace(&[(Write, 3), (Read, 1), (Write, 7)]);
        let b = trace(&[(Write, 3), (Write, 7), (Read, 9)]);
        let c = trace(&[(Write, 3), (Write, 8)]);
        assert!(check_determinism(&[a.clone(), b]).unwrap().pass);
        let r = check_determinism(&[a, c]).unwrap();
        assert!(!r.pass);
        assert_eq!(r.first_offense, Some(1));
    }

    #[test]
    fn geometry_mismatch_is_an_error() {
        let a = trace(&[]);
        let mut b = trace(&[]);
        b.meta.num_blocks = 5;
        assert!(matches!(check_determinism(&[a, b]), Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn budgets() {
        use AccessKind::*;
        let t = trace(&[(Write, 1), (Write, 2), (Write, 3), (Read, 1)]);
        assert!(check_write_budget(&t, 2, 2.0).pass);
        assert!(!check_write_budget(&t, 2, 1.4).pass);
        assert!(check_write_budget(&t, 2, 1.5).stats["average"] == 1.5);
        let r = check_write_budget(&t, 1, 2.0);
        assert_eq!(r.first_offense, Some(2));
        let rb = ReadBound { c: 2.0, c0: 2.0, b: 64, n: 1 << 16 };
        assert_eq!(rb.limit(), 8.0);
        assert!(check_read_budget(&t, 1, rb).pass);
    }
}
