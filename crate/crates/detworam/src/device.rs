//! Fixed-size block storage with an optional physical-access trace.
//!
//! A [`BlockDevice`] is the physical array every scheme in this crate writes
//! to. Three backends exist: a dense in-memory buffer, a sparse map (used for
//! devices too large to materialize), and a single container file accessed
//! with positioned I/O.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Produces the contents of a sparse block that was never written.
pub type FillFn = Arc<dyn Fn(u64, &mut [u8]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

impl AccessKind {
    fn tag(self) -> char {
        match self {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub seq: u64,
    pub kind: AccessKind,
    pub index: u64,
}

/// Describes the store a trace was recorded on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceMeta {
    pub scheme: String,
    pub block_bytes: usize,
    pub num_blocks: u64,
    /// First index of the payload area; lower indices hold scheme metadata.
    pub payload_start: u64,
    pub params: BTreeMap<String, String>,
}

impl TraceMeta {
    pub fn new(scheme: &str, block_bytes: usize, num_blocks: u64) -> Self {
        TraceMeta { scheme: scheme.to_string(), block_bytes, num_blocks, payload_start: 0, params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    /// Header line, without the trailing newline.
    pub fn header(&self) -> String {
        let mut line = format!(
            "# scheme={} block_bytes={} num_blocks={} payload_start={}",
            self.scheme, self.block_bytes, self.num_blocks, self.payload_start
        );
        for (k, v) in &self.params {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let body = line.strip_prefix('#').ok_or_else(|| Error::MalformedTrace("missing '#' header line".into()))?;
        let mut meta = TraceMeta::default();
        for field in body.split_whitespace() {
            let (k, v) =
                field.split_once('=').ok_or_else(|| Error::MalformedTrace(format!("bad header field {field:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| Error::MalformedTrace(format!("bad number in {field:?}")));
            match k {
                "scheme" => meta.scheme = v.to_string(),
                "block_bytes" => meta.block_bytes = num(v)? as usize,
                "num_blocks" => meta.num_blocks = num(v)?,
                "payload_start" => meta.payload_start = num(v)?,
                _ => {
                    meta.params.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(meta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(meta: TraceMeta) -> Self {
        Trace { meta, events: Vec::new() }
    }

    pub fn writes(&self) -> usize {
        self.events.iter().filter(|e| e.kind == AccessKind::Write).count()
    }

    pub fn reads(&self) -> usize {
        self.events.iter().filter(|e| e.kind == AccessKind::Read).count()
    }

    /// Physical indices of all events, in order.
    pub fn locations(&self) -> Vec<u64> {
        self.events.iter().map(|e| e.index).collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.meta.header())?;
        for e in &self.events {
            writeln!(out, "{},{},{}", e.seq, e.kind.tag(), e.index)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::MalformedTrace("empty trace file".into()))??;
        let mut trace = Trace::new(TraceMeta::parse_header(&header)?);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || Error::MalformedTrace(format!("line {}: {line:?}", n + 2));
            let mut parts = line.split(',');
            let seq = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let kind = match parts.next() {
                Some("R") => AccessKind::Read,
                Some("W") => AccessKind::Write,
                _ => return Err(bad()),
            };
            let index = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            trace.events.push(TraceEvent { seq, kind, index });
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Trace::read_from(std::io::BufReader::new(File::open(path)?))
    }
}

/// The WOnly filter: keeps write events, in order.
pub fn filter_writes(trace: &Trace) -> Trace {
    Trace {
        meta: trace.meta.clone(),
        events: trace.events.iter().filter(|e| e.kind == AccessKind::Write).copied().collect(),
    }
}

/// Counters kept regardless of tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IoStats {
    pub reads: u64,
    pub writes: u64,
    /// Accesses to blocks below the reserved boundary (scheme metadata).
    pub reserved_reads: u64,
    pub reserved_writes: u64,
}

impl IoStats {
    pub fn payload_reads(&self) -> u64 {
        self.reads - self.reserved_reads
    }

    pub fn payload_writes(&self) -> u64 {
        self.writes - self.reserved_writes
    }

    pub fn since(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            reserved_reads: self.reserved_reads - earlier.reserved_reads,
            reserved_writes: self.reserved_writes - earlier.reserved_writes,
        }
    }
}

#[derive(Default)]
struct Recorder {
    enabled: bool,
    keep: bool,
    next_seq: u64,
    trace: Trace,
    sink: Option<Box<dyn Write + Send>>,
}

impl Recorder {
    fn record(&mut self, kind: AccessKind, index: u64) -> std::io::Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let event = TraceEvent { seq: self.next_seq, kind, index };
        self.next_seq += 1;
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{},{},{}", event.seq, kind.tag(), index)?;
        }
        if self.keep {
            self.trace.events.push(event);
        }
        Ok(())
    }
}

enum Backend {
    Memory(Vec<u8>),
    Sparse { blocks: HashMap<u64, Box<[u8]>>, fill: Option<FillFn> },
    File(File),
}

pub struct BlockDevice {
    block_size: usize,
    num_blocks: u64,
    reserved: u64,
    backend: Backend,
    recorder: Mutex<Recorder>,
    reads: AtomicU64,
    writes: AtomicU64,
    reserved_reads: AtomicU64,
    reserved_writes: AtomicU64,
}

impl fmt::Debug for BlockDevice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.backend {
            Backend::Memory(_) => "memory",
            Backend::Sparse { .. } => "sparse",
            Backend::File(_) => "file",
        };
        f.debug_struct("BlockDevice")
            .field("backend", &kind)
            .field("block_size", &self.block_size)
            .field("num_blocks", &self.num_blocks)
            .finish()
    }
}

fn check_geometry(block_size: usize, num_blocks: u64) -> Result<()> {
    if block_size == 0 || num_blocks == 0 {
        return Err(Error::InvalidGeometry(format!(
            "device needs positive block size and count (got {block_size} x {num_blocks})"
        )));
    }
    Ok(())
}

impl BlockDevice {
    fn with_backend(block_size: usize, num_blocks: u64, backend: Backend) -> Self {
        BlockDevice {
            block_size,
            num_blocks,
            reserved: 0,
            backend,
            recorder: Mutex::new(Recorder::default()),
            reads: AtomicU64::new(0),
            writes: AtomicU64::new(0),
            reserved_reads: AtomicU64::new(0),
            reserved_writes: AtomicU64::new(0),
        }
    }

    /// Dense zero-initialized in-memory device.
    pub fn memory(block_size: usize, num_blocks: u64) -> Result<Self> {
        check_geometry(block_size, num_blocks)?;
        let bytes = (block_size as u64)
            .checked_mul(num_blocks)
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| Error::InvalidGeometry("device too large for memory".into()))?;
        Ok(Self::with_backend(block_size, num_blocks, Backend::Memory(vec![0; bytes])))
    }

    /// In-memory device storing only written blocks. Unwritten blocks read
    /// as zero, or as whatever `fill` produces for that index.
    pub fn sparse(block_size: usize, num_blocks: u64, fill: Option<FillFn>) -> Result<Self> {
        check_geometry(block_size, num_blocks)?;
        Ok(Self::with_backend(block_size, num_blocks, Backend::Sparse { blocks: HashMap::new(), fill }))
    }

    /// Creates (or truncates) a zero-filled container file.
    pub fn create_file(path: &Path, block_size: usize, num_blocks: u64) -> Result<Self> {
        check_geometry(block_size, num_blocks)?;
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(true).open(path)?;
        file.set_len(block_size as u64 * num_blocks)?;
        Ok(Self::with_backend(block_size, num_blocks, Backend::File(file)))
    }

    /// Opens an existing container file; the block count follows from its length.
    pub fn open_file(path: &Path, block_size: usize) -> Result<Self> {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let len = file.metadata()?.len();
        if block_size == 0 || len % block_size as u64 != 0 {
            return Err(Error::InvalidGeometry(format!(
                "file length {len} is not a multiple of block size {block_size}"
            )));
        }
        check_geometry(block_size, len / block_size as u64)?;
        Ok(Self::with_backend(block_size, len / block_size as u64, Backend::File(file)))
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_blocks(&self) -> u64 {
        self.num_blocks
    }

    /// Blocks `[0, reserved)` are counted separately in [`IoStats`].
    pub fn set_reserved(&mut self, reserved: u64) {
        self.reserved = reserved;
    }

    fn check_index(&self, index: u64) -> Result<()> {
        if index >= self.num_blocks {
            return Err(Error::IndexOutOfRange { index, num_blocks: self.num_blocks });
        }
        Ok(())
    }

    fn count(&self, kind: AccessKind, index: u64) -> Result<()> {
        let reserved = index < self.reserved;
        match kind {
            AccessKind::Read => {
                self.reads.fetch_add(1, Ordering::Relaxed);
                if reserved {
                    self.reserved_reads.fetch_add(1, Ordering::Relaxed);
                }
            }
            AccessKind::Write => {
                self.writes.fetch_add(1, Ordering::Relaxed);
                if reserved {
                    self.reserved_writes.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        self.recorder.lock().expect("trace lock poisoned").record(kind, index)?;
        Ok(())
    }

    pub fn read_into(&self, index: u64, buf: &mut [u8]) -> Result<()> {
        self.check_index(index)?;
        if buf.len() != self.block_size {
            return Err(Error::SizeMismatch { expected: self.block_size, actual: buf.len() });
        }
        let bs = self.block_size;
        match &self.backend {
            Backend::Memory(bytes) => {
                let off = index as usize * bs;
                buf.copy_from_slice(&bytes[off..off + bs]);
            }
            Backend::Sparse { blocks, fill } => match (blocks.get(&index), fill) {
                (Some(b), _) => buf.copy_from_slice(b),
                (None, Some(f)) => f(index, buf),
                (None, None) => buf.fill(0),
            },
            Backend::File(file) => file.read_exact_at(buf, index * bs as u64)?,
        }
        self.count(AccessKind::Read, index)
    }

    pub fn read_block(&self, index: u64) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; self.block_size];
        self.read_into(index, &mut buf)?;
        Ok(buf)
    }

    pub fn write_block(&mut self, index: u64, data: &[u8]) -> Result<()> {
        self.check_index(index)?;
        if data.len() != self.block_size {
            return Err(Error::SizeMismatch { expected: self.block_size, actual: data.len() });
        }
        let bs = self.block_size;
        match &mut self.backend {
            Backend::Memory(bytes) => {
                let off = index as usize * bs;
                bytes[off..off + bs].copy_from_slice(data);
            }
            Backend::Sparse { blocks, .. } => {
                blocks.insert(index, data.into());
            }
            Backend::File(file) => file.write_all_at(data, index * bs as u64)?,
        }
        self.count(AccessKind::Write, index)
    }

    pub fn sync(&self) -> Result<()> {
        if let Backend::File(file) = &self.backend {
            file.sync_data()?;
        }
        Ok(())
    }

    /// Copy of the whole device, without touching counters or the trace.
    pub fn image(&self) -> Result<Vec<u8>> {
        let bs = self.block_size;
        match &self.backend {
            Backend::Memory(bytes) => Ok(bytes.clone()),
            Backend::Sparse { blocks, fill } => {
                let mut out = vec![0u8; bs * self.num_blocks as usize];
                for (i, chunk) in out.chunks_mut(bs).enumerate() {
                    match (blocks.get(&(i as u64)), fill) {
                        (Some(b), _) => chunk.copy_from_slice(b),
                        (None, Some(f)) => f(i as u64, chunk),
                        (None, None) => {}
                    }
                }
                Ok(out)
            }
            Backend::File(file) => {
                let mut out = vec![0u8; bs * self.num_blocks as usize];
                file.read_exact_at(&mut out, 0)?;
                Ok(out)
            }
        }
    }

    pub fn stats(&self) -> IoStats {
        IoStats {
            reads: self.reads.load(Ordering::Relaxed),
            writes: self.writes.load(Ordering::Relaxed),
            reserved_reads: self.reserved_reads.load(Ordering::Relaxed),
            reserved_writes: self.reserved_writes.load(Ordering::Relaxed),
        }
    }

    /// Starts recording a fresh in-memory trace. Sequence numbers restart at 0.
    pub fn start_trace(&self, meta: TraceMeta) {
        let mut rec = self.recorder.lock().expect("trace lock poisoned");
        rec.enabled = true;
        rec.keep = true;
        rec.next_seq = 0;
        rec.trace = Trace::new(meta);
    }

    /// Streams events to `sink` as they happen, after writing the header.
    /// Set `keep` to also retain them in memory.
    pub fn stream_trace(&self, meta: TraceMeta, mut sink: Box<dyn Write + Send>, keep: bool) -> Result<()> {
        writeln!(sink, "{}", meta.header())?;
        let mut rec = self.recorder.lock().expect("trace lock poisoned");
        rec.enabled = true;
        rec.keep = keep;
        rec.next_seq = 0;
        rec.trace = Trace::new(meta);
        rec.sink = Some(sink);
        Ok(())
    }

    /// Stops recording and returns what was kept in memory.
    pub fn stop_trace(&self) -> Result<Trace> {
        let mut rec = self.recorder.lock().expect("trace lock poisoned");
        rec.enabled = false;
        if let Some(mut sink) = rec.sink.take() {
            sink.flush()?;
        }
        Ok(std::mem::take(&mut rec.trace))
    }

    pub fn tracing(&self) -> bool {
        self.recorder.lock().expect("trace lock poisoned").enabled
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_blocks_are_zero_and_out_of_range_is_an_error() {
        let dev = BlockDevice::memory(16, 4).unwrap();
        assert_eq!(dev.read_block(0).unwrap(), vec![0; 16]);
        assert!(matches!(dev.read_block(4), Err(Error::IndexOutOfRange { index: 4, .. })));
    }

    #[test]
    fn sparse_fill_supplies_unwritten_blocks() {
        let fill: FillFn = Arc::new(|i, buf: &mut [u8]| buf.fill(i as u8));
        let mut dev = BlockDevice::sparse(8, 10, Some(fill)).unwrap();
        assert_eq!(dev.read_block(3).unwrap(), vec![3; 8]);
        dev.write_block(3, &[9; 8]).unwrap();
        assert_eq!(dev.read_block(3).unwrap(), vec![9; 8]);
    }

    #[test]
    fn header_round_trips() {
        let mut meta = TraceMeta::new("det", 4096, 100).with_param("n", 64);
        meta.payload_start = 1;
        assert_eq!(TraceMeta::parse_header(&meta.header()).unwrap(), meta);
    }

    #[test]
    fn reserved_accesses_are_split_out() {
        let mut dev = BlockDevice::memory(4, 4).unwrap();
        dev.set_reserved(1);
        dev.write_block(0, &[1; 4]).unwrap();
        dev.write_block(2, &[1; 4]).unwrap();
        let s = dev.stats();
        assert_eq!((s.writes, s.reserved_writes, s.payload_writes()), (2, 1, 1));
    }
}
