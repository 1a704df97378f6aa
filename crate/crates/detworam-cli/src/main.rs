use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use detworam::baselines::{run_attack, AttackConfig, HiveWoram};
use detworam::harness::{bench, fuzz, Workload};
use detworam::verifier::{
    check_determinism, check_read_budget, check_snapshot_freshness, check_write_budget, ReadBound, VerifierReport,
};
use detworam::{
    create_container, open_container, BlockDevice, CipherKey, ContainerConfig, DetConfig, DetWoram, LayoutMode,
    ObliviousStore, ToyWoram, Trace,
};

#[derive(Parser)]
#[command(name = "detworam", version, about = "Deterministic write-only ORAM containers and tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Seg,
    Ilv,
}

impl From<Mode> for LayoutMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Seg => LayoutMode::Segmented,
            Mode::Ilv => LayoutMode::Interleaved,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Det,
    Toy,
    Hive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    /// Identical write-location sequences across traces.
    Det,
    /// Physical payload writes per logical write.
    Budget,
    /// Physical reads per logical read.
    Read,
    /// Same set of changed blocks between consecutive snapshots.
    Snapshot,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackScheme {
    Datalair,
}

/// Geometry of an in-memory store used by `fuzz` and `bench`.
#[derive(clap::Args, Clone)]
struct MemArgs {
    #[arg(long, value_enum, default_value = "det")]
    scheme: Scheme,
    /// Logical blocks N.
    #[arg(long, default_value_t = 1024)]
    n: u64,
    #[arg(long, default_value_t = 2)]
    ratio: u64,
    #[arg(long, default_value_t = 64)]
    branch: u64,
    #[arg(long, value_enum, default_value = "seg")]
    mode: Mode,
    #[arg(long, default_value_t = 4096)]
    block_bytes: usize,
    /// Persist client state after every write (det only). In-memory stores
    /// default to persisting on close.
    #[arg(long)]
    durable_state: bool,
    /// Slots touched per write (hive only).
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Encryption key seed for in-memory stores.
    #[arg(long, default_value_t = 1)]
    key_seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a fresh random 32-byte key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Create and format a container file.
    Create {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        size_blocks: u64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=3))]
        ratio: u64,
        #[arg(long, default_value_t = 64)]
        branch: u64,
        #[arg(long, value_enum, default_value = "seg")]
        mode: Mode,
        #[arg(long, default_value_t = 4096)]
        block_bytes: usize,
        #[arg(long)]
        lazy_state: bool,
    },
    /// Read one logical block to a file or stdout (hex).
    Read {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        addr: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one logical block from a file (zero-padded) or a fill byte.
    Write {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        addr: u64,
        #[arg(long, conflicts_with = "fill")]
        input: Option<PathBuf>,
        #[arg(long)]
        fill: Option<u8>,
    },
    /// Random reads and writes against a reference map.
    Fuzz {
        #[command(flatten)]
        mem: MemArgs,
        #[arg(long, default_value_t = 10_000)]
        ops: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fuzz an existing container instead of an in-memory store.
        #[arg(long, requires = "key")]
        path: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Count physical I/O for a workload, optionally recording the trace.
    Bench {
        #[command(flatten)]
        mem: MemArgs,
        #[arg(long, default_value = "randw")]
        workload: Workload,
        #[arg(long, default_value_t = 10_000)]
        ops: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        summary: Format,
    },
    /// Check recorded traces or snapshot directories.
    Verify {
        #[arg(long, value_enum)]
        check: Check,
        /// Trace files (two or more for `det`).
        #[arg(long = "trace", num_args = 1..)]
        traces: Vec<PathBuf>,
        /// Logical operation count; defaults to the trace's `ops` parameter.
        #[arg(long)]
        logical: Option<u64>,
        /// Average bound for `budget`.
        #[arg(long, default_value_t = 3.0)]
        bound: f64,
        /// Read bound `c * ceil(log_b N) + c0`.
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 2.0)]
        c0: f64,
        /// Snapshot directories (files compared in name order).
        #[arg(long)]
        seq_a: Option<PathBuf>,
        #[arg(long)]
        seq_b: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        block_bytes: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Monte-Carlo distinguishing attack on a randomized baseline.
    Attack {
        #[arg(long, value_enum, default_value = "datalair")]
        scheme: AttackScheme,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `coins` seeds the randomized baseline, so runs with different seeds differ.
fn mem_store(mem: &MemArgs, coins: u64) -> CliResult<Box<dyn ObliviousStore>> {
    let key = CipherKey::from_seed(mem.key_seed);
    let m = mem.n.checked_mul(mem.ratio).ok_or("M overflows")?;
    Ok(match mem.scheme {
        Scheme::Det => {
            let cfg = DetConfig::new(mem.n, m, mem.branch, mem.block_bytes, mem.mode.into()).durable(mem.durable_state);
            let dev = BlockDevice::memory(mem.block_bytes, cfg.plan()?.total_blocks)?;
            Box::new(DetWoram::create(dev, &key, cfg)?)
        }
        Scheme::Toy => Box::new(ToyWoram::create(BlockDevice::memory(mem.block_bytes, 2 * mem.n)?, &key, mem.n)?),
        Scheme::Hive => Box::new(HiveWoram::create(
            BlockDevice::memory(mem.block_bytes, m.max(2 * mem.n))?,
            &key,
            mem.n,
            mem.k,
            coins,
        )?),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn snapshot_files(dir: &Path) -> CliResult<Vec<Vec<u8>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    paths.sort();
    Ok(paths.iter().map(fs::read).collect::<Result<_, _>>()?)
}

fn logical_ops(explicit: Option<u64>, trace: &Trace) -> CliResult<u64> {
    if let Some(n) = explicit {
        return Ok(n);
    }
    let ops = trace.meta.params.get("ops").ok_or("trace has no `ops` parameter; pass --logical")?;
    Ok(ops.parse()?)
}

fn trace_param(trace: &Trace, key: &str) -> CliResult<u64> {
    let v = trace.meta.params.get(key).ok_or_else(|| format!("trace has no `{key}` parameter"))?;
    Ok(v.parse()?)
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.cmd {
        Cmd::Keygen { out } => {
            CipherKey::generate().save(&out)?;
            println!("wrote key to {}", out.display());
        }
        Cmd::Create { path, key, size_blocks, ratio, branch, mode, block_bytes, lazy_state } => {
            let key = CipherKey::load(&key)?;
            let cfg = ContainerConfig {
                path: path.clone(),
                block_bytes,
                n: size_blocks,
                ratio,
                b: branch,
                mode: mode.into(),
                durable: !lazy_state,
            };
            let store = create_container(&cfg, &key)?;
            let plan = *store.plan();
            store.close()?;
            println!(
                "created {}: N={} M={} b={} mode={} blocks={} ({} bytes)",
                path.display(),
                plan.n,
                plan.m,
                branch,
                plan.mode.name(),
                plan.total_blocks,
                plan.total_blocks * block_bytes as u64
            );
        }
        Cmd::Read { path, key, addr, out } => {
            let mut store = open_container(&path, &CipherKey::load(&key)?)?;
            let data = store.read(addr)?;
            match out {
                Some(p) => fs::write(p, &data)?,
                None => println!("{}", hex(&data)),
            }
            store.close()?;
        }
        Cmd::Write { path, key, addr, input, fill } => {
            let mut store = open_container(&path, &CipherKey::load(&key)?)?;
            let bs = store.block_size();
            let mut data = match (input, fill) {
                (Some(p), _) => fs::read(p)?,
                (None, Some(byte)) => vec![byte; bs],
                (None, None) => return Err("pass --input or --fill".into()),
            };
            if data.len() > bs {
                return Err(format!("input is {} bytes, block size is {bs}", data.len()).into());
            }
            data.resize(bs, 0);
            store.set_durable(true);
            store.write(addr, &data)?;
            store.close()?;
        }
        Cmd::Fuzz { mem, ops, seed, path, key } => {
            let report = match path {
                Some(p) => {
                    let key = CipherKey::load(&key.expect("clap enforces --key"))?;
                    let mut store = open_container(&p, &key)?;
                    let r = fuzz(&mut store, ops, seed)?;
                    store.close()?;
                    r
                }
                None => fuzz(mem_store(&mem, seed)?.as_mut(), ops, seed)?,
            };
            print!("{}", report.to_text());
            return Ok(report.pass());
        }
        Cmd::Bench { mem, workload, ops, seed, trace, summary } => {
            let mut store = mem_store(&mem, seed)?;
            if let Some(path) = &trace {
                let meta = store
                    .trace_meta()
                    .with_param("workload", workload)
                    .with_param("ops", ops)
                    .with_param("seed", seed)
                    .with_param("b", mem.branch);
                let sink = BufWriter::new(File::create(path)?);
                store.device().stream_trace(meta, Box::new(sink), false)?;
            }
            let result = bench(store.as_mut(), workload, ops, seed)?;
            if trace.is_some() {
                store.device().stop_trace()?;
            }
            match summary {
                Format::Text => print!("{}", result.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&result)?),
            }
        }
        Cmd::Verify { check, traces, logical, bound, c, c0, seq_a, seq_b, block_bytes, format } => {
            let loaded: Vec<Trace> = traces.iter().map(|p| Trace::load(p)).collect::<Result<_, _>>()?;
            let scheme = loaded.first().map(|t| t.meta.scheme.clone()).unwrap_or_else(|| "snapshot".into());
            let mut report = VerifierReport::new(&scheme);
            match check {
                Check::Det => {
                    if loaded.len() < 2 {
                        return Err("determinism needs at least two --trace files".into());
                    }
                    report.push(check_determinism(&loaded)?);
                }
                Check::Budget | Check::Read => {
                    let t = loaded.first().ok_or("pass --trace")?;
                    let ops = logical_ops(logical, t)?;
                    report.push(match check {
                        Check::Budget => check_write_budget(t, ops, bound),
                        _ => {
                            let b = trace_param(t, "b")?;
                            let n = trace_param(t, "n")?;
                            check_read_budget(t, ops, ReadBound { c, c0, b, n })
                        }
                    });
                }
                Check::Snapshot => {
                    let a = snapshot_files(&seq_a.ok_or("pass --seq-a")?)?;
                    let b = snapshot_files(&seq_b.ok_or("pass --seq-b")?)?;
                    report.push(check_snapshot_freshness(&a, &b, block_bytes));
                }
            }
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            return Ok(report.pass());
        }
        Cmd::Attack { scheme: AttackScheme::Datalair, n, k, trials, seed, format } => {
            let report = run_attack(&AttackConfig::new(n, k, trials, seed))?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            return Ok(report.pass);
        }
    }
    std::io::stdout().flush()?;
    Ok(true)
}
