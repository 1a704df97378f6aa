//! Occupancy-level simulation of the DataLair write policy and the
//! three-write distinguisher against it.
//!
//! Only slot occupancy matters to the adversary, so no data is encrypted or
//! stored; a slot holds the logical address placed in it.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{newcombe_diff, wilson, Z99};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct DataLair {
    n: usize,
    k: usize,
    owner: Vec<u32>,
    pos: Vec<u32>,
    /// Free slots, with `free_at[s]` the index of slot `s` in `free`.
    free: Vec<u32>,
    free_at: Vec<u32>,
    stash: VecDeque<u32>,
    in_stash: Vec<bool>,
    s0: Vec<u32>,
    s1: Vec<u32>,
}

impl DataLair {
    /// `n` logical blocks over `2n` slots, all free.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k < 3 || n <= 2 * k {
            return Err(Error::InvalidGeometry(format!("DataLair needs k >= 3 and N > 2k (N={n}, k={k})")));
        }
        let mut s = DataLair {
            n,
            k,
            owner: Vec::new(),
            pos: Vec::new(),
            free: Vec::new(),
            free_at: Vec::new(),
            stash: VecDeque::new(),
            in_stash: Vec::new(),
            s0: Vec::with_capacity(k),
            s1: Vec::with_capacity(k),
        };
        s.reset();
        Ok(s)
    }

    /// Back to the all-free state, reusing allocations.
    pub fn reset(&mut self) {
        let slots = 2 * self.n;
        self.owner.clear();
        self.owner.resize(slots, NONE);
        self.pos.clear();
        self.pos.resize(self.n, NONE);
        self.free.clear();
        self.free.extend(0..slots as u32);
        self.free_at.clear();
        self.free_at.extend(0..slots as u32);
        self.stash.clear();
        self.in_stash.clear();
        self.in_stash.resize(self.n, false);
    }

    pub fn occupied(&self) -> usize {
        2 * self.n - self.free.len()
    }

    pub fn stash_len(&self) -> usize {
        self.stash.len()
    }

    pub fn is_free(&self, slot: u32) -> bool {
        self.owner[slot as usize] == NONE
    }

    fn release(&mut self, slot: u32) {
        self.owner[slot as usize] = NONE;
        self.free_at[slot as usize] = self.free.len() as u32;
        self.free.push(slot);
    }

    fn occupy(&mut self, slot: u32, addr: u32) {
        let at = self.free_at[slot as usize] as usize;
        let last = *self.free.last().expect("slot was free");
        self.free.swap_remove(at);
        if last != slot {
            self.free_at[last as usize] = at as u32;
        }
        self.owner[slot as usize] = addr;
    }

    /// The candidate sets of the last write.
    pub fn last_sets(&self) -> (&[u32], &[u32]) {
        (&self.s0, &self.s1)
    }

    /// One logical write of `addr`; returns the `k` slots written.
    pub fn write<R: Rng>(&mut self, rng: &mut R, addr: u32, touched: &mut Vec<u32>) {
        if !self.in_stash[addr as usize] {
            self.in_stash[addr as usize] = true;
            self.stash.push_back(addr);
        }
        let k = self.k;
        let slots = 2 * self.n as u32;
        self.s0.clear();
        while self.s0.len() < k {
            let s = self.free[rng.gen_range(0..self.free.len())];
            if !self.s0.contains(&s) {
                self.s0.push(s);
            }
        }
        self.s1.clear();
        while self.s1.len() < k {
            let s = rng.gen_range(0..slots);
            if !self.s0.contains(&s) && !self.s1.contains(&s) {
                self.s1.push(s);
            }
        }
        touched.clear();
        let (mut i0, mut i1) = (0, 0);
        for _ in 0..k {
            if rng.gen::<bool>() {
                touched.push(self.s1[i1]);
                i1 += 1;
            } else {
                let u = self.s0[i0];
                i0 += 1;
                touched.push(u);
                if let Some(alpha) = self.stash.pop_front() {
                    self.in_stash[alpha as usize] = false;
                    let old = self.pos[alpha as usize];
                    if old != NONE {
                        self.release(old);
                    }
                    self.occupy(u, alpha);
                    self.pos[alpha as usize] = u;
                }
            }
        }
    }

    /// Writes every address once, then `lambda` more copies of address 0.
    /// Returns whether the state ended with exactly `N` occupied slots and an
    /// empty stash.
    pub fn initialize<R: Rng>(&mut self, rng: &mut R, lambda: usize) -> bool {
        let mut scratch = Vec::with_capacity(self.k);
        for a in 0..self.n as u32 {
            self.write(rng, a, &mut scratch);
        }
        for _ in 0..lambda {
            self.write(rng, 0, &mut scratch);
        }
        self.occupied() == self.n && self.stash.is_empty()
    }
}

/// Event `E`: the first slot of the first write is absent from the second
/// write and present in the third.
pub fn distinguishing_event(u1: &[u32], u2: &[u32], u3: &[u32]) -> bool {
    let x = u1[0];
    !u2.contains(&x) && u3.contains(&x)
}

/// The adversary's guess: 0 when `E` happens, otherwise a fair coin.
pub fn datalair_adversary<R: Rng>(rng: &mut R, u1: &[u32], u2: &[u32], u3: &[u32]) -> u8 {
    if distinguishing_event(u1, u2, u3) {
        0
    } else {
        rng.gen_range(0..2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AttackConfig {
    pub n: usize,
    pub k: usize,
    pub trials: u64,
    pub seed: u64,
    pub lambda: usize,
}

impl AttackConfig {
    pub fn new(n: usize, k: usize, trials: u64, seed: u64) -> Self {
        AttackConfig { n, k, trials, seed, lambda: 64 }
    }

    /// Analytic advantage lower bound `(N - 2k) / (4 N^2)`.
    pub fn bound(&self) -> f64 {
        (self.n as f64 - 2.0 * self.k as f64) / (4.0 * (self.n * self.n) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceEstimate {
    /// Trials kept (initialization succeeded).
    pub trials: u64,
    pub aborted: u64,
    /// Trials in which `E` occurred.
    pub events: u64,
    /// Trials in which the adversary output 0.
    pub zeros: u64,
    pub p_event: f64,
    pub ci_event: (f64, f64),
    pub p_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub config: AttackConfig,
    pub bound: f64,
    pub seq0: SequenceEstimate,
    pub seq1: SequenceEstimate,
    /// `p0 - p1` over the event probabilities, with its 99% interval.
    pub advantage: f64,
    pub advantage_ci: (f64, f64),
    /// Difference of the adversary's output-0 rates (half the event gap).
    pub output_advantage: f64,
    pub pass: bool,
}

impl AttackReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        s.push_str(&format!(
            "datalair attack: N={} k={} trials/seq={} seed={} lambda={}\n",
            c.n, c.k, c.trials, c.seed, c.lambda
        ));
        for (name, e) in [("seq0 (w0,w0,w2)", &self.seq0), ("seq1 (w0,w1,w2)", &self.seq1)] {
            s.push_str(&format!(
                "{name}: kept={} aborted={} E={} p={:.6} wilson99=[{:.6}, {:.6}] out0={:.6}\n",
                e.trials, e.aborted, e.events, e.p_event, e.ci_event.0, e.ci_event.1, e.p_zero
            ));
        }
        s.push_str(&format!(
            "advantage p0-p1={:.6} ci99=[{:.6}, {:.6}] bound={:.6} output-advantage={:.6}\n",
            self.advantage, self.advantage_ci.0, self.advantage_ci.1, self.bound, self.output_advantage
        ));
        s.push_str(&format!("result: {}\n", if self.pass { "PASS" } else { "FAIL" }));
        s
    }
}

fn run_sequence(cfg: &AttackConfig, second: u32, seed: u64) -> Result<(u64, u64, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coin = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c011);
    let mut state = DataLair::new(cfg.n, cfg.k)?;
    let (mut u1, mut u2, mut u3) = (Vec::new(), Vec::new(), Vec::new());
    let (mut kept, mut aborted, mut events, mut zeros) = (0, 0, 0, 0);
    for _ in 0..cfg.trials {
        state.reset();
        if !state.initialize(&mut rng, cfg.lambda) {
            aborted += 1;
            continue;
        }
        state.write(&mut rng, 0, &mut u1);
        state.write(&mut rng, second, &mut u2);
        state.write(&mut rng, 2, &mut u3);
        kept += 1;
        events += distinguishing_event(&u1, &u2, &u3) as u64;
        zeros += (datalair_adversary(&mut coin, &u1, &u2, &u3) == 0) as u64;
    }
    Ok((kept, aborted, events, zeros))
}

/// Runs `trials` independent trials for each of the two write sequences.
pub fn run_attack(cfg: &AttackConfig) -> Result<AttackReport> {
    let estimate = |second: u32, seed: u64| -> Result<SequenceEstimate> {
        let (trials, aborted, events, zeros) = run_sequence(cfg, second, seed)?;
        let denom = trials.max(1) as f64;
        Ok(SequenceEstimate {
            trials,
            aborted,
            events,
            zeros,
            p_event: events as f64 / denom,
            ci_event: wilson(events, trials, Z99),
            p_zero: zeros as f64 / denom,
        })
    };
    let (seq0, seq1) = std::thread::scope(|scope| {
        let other = scope.spawn(|| estimate(1, cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        (estimate(0, cfg.seed), other.join().expect("sequence thread"))
    });
    let (seq0, seq1) = (seq0?, seq1?);
    let advantage = seq0.p_event - seq1.p_event;
    let advantage_ci = newcombe_diff(seq0.events, seq0.trials, seq1.events, seq1.trials, Z99);
    let half_width = (advantage_ci.1 - advantage_ci.0) / 2.0;
    let bound = cfg.bound();
    Ok(AttackReport {
        config: *cfg,
        bound,
        advantage,
        advantage_ci,
        output_advantage: seq0.p_zero - seq1.p_zero,
        pass: advantage_ci.0 > 0.0 && advantage >= bound - half_width,
        seq0,
        seq1,
    })
}
