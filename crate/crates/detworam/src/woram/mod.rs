//! Write-only ORAM engines.
//!
//! The pointer-based engine ([`det_write`], [`det_read`]) is generic over
//! [`WoramIo`], which supplies area access and the position map. The same
//! engine drives the data WoORAM and the position WoORAM that stores trie
//! nodes.

mod flat;
mod toy;

pub use flat::FlatWoram;
pub use toy::ToyWoram;

use crate::device::{BlockDevice, TraceMeta};
use crate::error::{Error, Result};

/// Serialized width of a [`PosPointer`].
pub const POINTER_BYTES: usize = 8;

/// Largest block size whose bit offsets fit the pointer's 16-bit field.
pub const MAX_BLOCK_BYTES: usize = 8192;

/// Sizes of one WoORAM: `n` main blocks, `m` holding blocks of `block_bytes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub n: u64,
    pub m: u64,
    pub block_bytes: usize,
}

impl Geometry {
    pub fn new(n: u64, m: u64, block_bytes: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidGeometry(format!("N and M must be positive (N={n}, M={m})")));
        }
        if block_bytes == 0 || block_bytes > MAX_BLOCK_BYTES {
            return Err(Error::InvalidGeometry(format!(
                "block size {block_bytes} outside 1..={MAX_BLOCK_BYTES} bytes"
            )));
        }
        if m >= u32::MAX as u64 {
            return Err(Error::InvalidGeometry(format!("holding area of {m} slots is too large")));
        }
        Ok(Geometry { n, m, block_bytes })
    }
}

/// Position map entry `(a_h, o, q)`: holding slot, bit offset and diff bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PosPointer {
    pub holding: u32,
    pub offset: u16,
    pub bit: bool,
}

impl Default for PosPointer {
    fn default() -> Self {
        PosPointer::NULL
    }
}

impl PosPointer {
    pub const NULL: PosPointer = PosPointer { holding: u32::MAX, offset: 0, bit: false };

    pub fn new(holding: u64, offset: u32, bit: bool) -> Self {
        assert!(holding < u32::MAX as u64, "holding slot {holding} too large");
        assert!(offset <= u16::MAX as u32, "bit offset {offset} too large");
        PosPointer { holding: holding as u32, offset: offset as u16, bit }
    }

    pub fn is_null(&self) -> bool {
        self.holding == u32::MAX
    }

    pub fn holding_slot(&self) -> Option<u64> {
        (!self.is_null()).then_some(self.holding as u64)
    }

    /// Little-endian `a_h: u32, o: u16, flags: u16` with the diff bit in flag bit 0.
    pub fn to_bytes(&self) -> [u8; POINTER_BYTES] {
        let mut out = [0u8; POINTER_BYTES];
        out[..4].copy_from_slice(&self.holding.to_le_bytes());
        if !self.is_null() {
            out[4..6].copy_from_slice(&self.offset.to_le_bytes());
            out[6..8].copy_from_slice(&(self.bit as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        let holding = u32::from_le_bytes(bytes[..4].try_into().expect("pointer width"));
        if holding == u32::MAX {
            return PosPointer::NULL;
        }
        let offset = u16::from_le_bytes(bytes[4..6].try_into().expect("pointer width"));
        let flags = u16::from_le_bytes(bytes[6..8].try_into().expect("pointer width"));
        PosPointer { holding, offset, bit: flags & 1 == 1 }
    }

    /// Rejects pointers that cannot belong to a holding area of `limit` slots
    /// over blocks of `block_bytes`.
    pub fn validate(self, limit: u64, block_bytes: usize) -> Result<Self> {
        if !self.is_null() && (self.holding as u64 >= limit || self.offset as usize >= 8 * block_bytes) {
            return Err(Error::CorruptPointer { pointer: self, limit });
        }
        Ok(self)
    }
}

/// Bit `o` of a block: `(byte[o / 8] >> (o % 8)) & 1`.
pub fn bit_at(block: &[u8], o: u32) -> bool {
    (block[(o / 8) as usize] >> (o % 8)) & 1 == 1
}

/// Lowest bit where `new` and `old` differ, with the value of that bit in
/// `new`. Equal blocks give offset 0.
pub fn bit_diff(new: &[u8], old: &[u8]) -> (u32, bool) {
    assert_eq!(new.len(), old.len(), "bit_diff needs equal-length blocks");
    let o = match new.iter().zip(old).position(|(x, y)| x != y) {
        Some(k) => 8 * k as u32 + (new[k] ^ old[k]).trailing_zeros(),
        None => 0,
    };
    (o, bit_at(new, o))
}

/// Main addresses refreshed at step `i`: `len` addresses starting at
/// `start`, wrapping modulo `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshRange {
    pub start: u64,
    pub len: u64,
    pub n: u64,
}

impl RefreshRange {
    /// The `(s, e)` form of the interval `[s, e)` modulo `n`. When `len == n`
    /// (a single holding block) the pair is `(s, s)` and means the whole area.
    pub fn bounds(&self) -> (u64, u64) {
        (self.start, (self.start + self.len) % self.n)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        let (start, n) = (self.start, self.n);
        (0..self.len).map(move |k| (start + k) % n)
    }
}

/// `[floor(i*N/M), floor((i+1)*N/M))` modulo `N`, in exact integer arithmetic.
pub fn refresh_range(i: u64, n: u64, m: u64) -> RefreshRange {
    let lo = i as u128 * n as u128 / m as u128;
    let hi = (i as u128 + 1) * n as u128 / m as u128;
    RefreshRange { start: (lo % n as u128) as u64, len: (hi - lo) as u64, n }
}

/// Pass number of the most recent write to `slot` of a circular region of
/// `len` slots that has received `written` sequential writes.
pub fn latest_epoch(written: u64, len: u64, slot: u64) -> Option<u64> {
    let (full, rem) = (written / len, written % len);
    if slot < rem {
        Some(full)
    } else {
        full.checked_sub(1)
    }
}

/// Area access plus position map for the pointer-based engine.
pub trait WoramIo {
    fn read_main(&mut self, a: u64) -> Result<Vec<u8>>;
    fn read_holding(&mut self, slot: u64) -> Result<Vec<u8>>;
    /// Writes `data`, the new version of address `a`, to holding `slot`.
    fn write_holding(&mut self, slot: u64, a: u64, data: &[u8]) -> Result<()>;
    fn write_main(&mut self, a: u64, data: &[u8]) -> Result<()>;
    fn getpos(&mut self, a: u64) -> Result<PosPointer>;
    fn setpos(&mut self, a: u64, ptr: PosPointer) -> Result<()>;

    /// Freshest content of `a`, used by refreshes.
    fn fresh(&mut self, a: u64) -> Result<Vec<u8>> {
        det_read(self, a)
    }
}

/// Reads `a` given its pointer: the main copy when the pointer is NULL or
/// the main copy's bit `o` equals `q`, the holding copy otherwise.
pub fn read_with_pointer<I: WoramIo + ?Sized>(io: &mut I, a: u64, ptr: PosPointer) -> Result<Vec<u8>> {
    let main = io.read_main(a)?;
    match ptr.holding_slot() {
        None => Ok(main),
        Some(_) if bit_at(&main, ptr.offset as u32) == ptr.bit => Ok(main),
        Some(slot) => io.read_holding(slot),
    }
}

pub fn det_read<I: WoramIo + ?Sized>(io: &mut I, a: u64) -> Result<Vec<u8>> {
    let ptr = io.getpos(a)?;
    read_with_pointer(io, a, ptr)
}

/// One write step `i`: holding write, pointer update, then the scheduled
/// main-area refreshes. The caller advances `i`.
pub fn det_write<I: WoramIo + ?Sized>(io: &mut I, n: u64, m: u64, i: u64, a: u64, data: &[u8]) -> Result<()> {
    let slot = i % m;
    io.write_holding(slot, a, data)?;
    let old = io.read_main(a)?;
    let (o, q) = bit_diff(data, &old);
    io.setpos(a, PosPointer::new(slot, o, q))?;
    refresh_step(io, n, m, i)
}

/// Refreshes every main address scheduled at step `i` from its freshest copy.
pub fn refresh_step<I: WoramIo + ?Sized>(io: &mut I, n: u64, m: u64, i: u64) -> Result<()> {
    for am in refresh_range(i, n, m).iter() {
        let fresh = io.fresh(am)?;
        io.write_main(am, &fresh)?;
    }
    Ok(())
}

pub(crate) fn check_addr(a: u64, n: u64) -> Result<()> {
    if a >= n {
        return Err(Error::AddressOutOfRange { addr: a, limit: n });
    }
    Ok(())
}

pub(crate) fn check_len(data: &[u8], expected: usize) -> Result<()> {
    if data.len() != expected {
        return Err(Error::SizeMismatch { expected, actual: data.len() });
    }
    Ok(())
}

/// A logical block store backed by one physical [`BlockDevice`].
pub trait ObliviousStore {
    fn scheme(&self) -> &str;
    /// Number of logical blocks.
    fn num_blocks(&self) -> u64;
    /// Logical block size in bytes.
    fn block_size(&self) -> usize;
    fn read(&mut self, a: u64) -> Result<Vec<u8>>;
    fn write(&mut self, a: u64, data: &[u8]) -> Result<()>;
    fn device(&self) -> &BlockDevice;
    fn trace_meta(&self) -> TraceMeta;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refresh_ranges_from_the_schedule() {
        assert_eq!(refresh_range(0, 4, 8).bounds(), (0, 0));
        assert_eq!(refresh_range(0, 4, 8).len, 0);
        assert_eq!(refresh_range(1, 4, 8).bounds(), (0, 1));
        for i in 0..10 {
            assert_eq!(refresh_range(i, 4, 4).len, 1);
        }
        assert_eq!(refresh_range(0, 8, 4).bounds(), (0, 2));
    }

    #[test]
    fn refresh_range_wraps() {
        // N=5, M=2: step 1 covers [2,5) and step 2 covers [5,7) = {0,1}.
        assert_eq!(refresh_range(1, 5, 2).iter().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(refresh_range(2, 5, 2).iter().collect::<Vec<_>>(), vec![0, 1]);
        let r = refresh_range(3, 3, 2);
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(r.bounds(), (1, 0));
    }

    #[test]
    fn refresh_range_is_exact_at_large_counters() {
        let i = u64::MAX - 1;
        let r = refresh_range(i, 3, 7);
        let lo = (i as u128 * 3) / 7;
        assert_eq!(r.start as u128, lo % 3);
    }

    #[test]
    fn bit_diff_examples() {
        let a = [0b1010_0000u8, 0xff];
        assert_eq!(bit_diff(&a, &a), (0, false));
        let mut b = [0u8; 4];
        let mut c = b;
        c[1] ^= 1 << 5;
        assert_eq!(bit_diff(&c, &b), (13, true));
        assert_eq!(bit_diff(&b, &c), (13, false));
        b[0] = 1;
        assert_eq!(bit_diff(&b, &b), (0, true));
    }

    #[test]
    fn bit_diff_witness_is_sound_on_all_byte_pairs() {
        for x in 0..=255u8 {
            for y in 0..=255u8 {
                let (o, q) = bit_diff(&[x], &[y]);
                if x != y {
                    assert_ne!(bit_at(&[y], o), q);
                }
                assert_eq!(bit_at(&[x], o), q);
            }
        }
    }

    #[test]
    fn pointer_round_trip() {
        for p in [PosPointer::NULL, PosPointer::new(7, 300, true), PosPointer::new(0, 0, false)] {
            assert_eq!(PosPointer::from_bytes(&p.to_bytes()), p);
        }
        assert_eq!(PosPointer::NULL.to_bytes(), [0xff, 0xff, 0xff, 0xff, 0, 0, 0, 0]);
    }

    #[test]
    fn epochs_follow_passes() {
        assert_eq!(latest_epoch(0, 4, 0), None);
        assert_eq!(latest_epoch(1, 4, 0), Some(0));
        assert_eq!(latest_epoch(1, 4, 1), None);
        assert_eq!(latest_epoch(4, 4, 3), Some(0));
        assert_eq!(latest_epoch(6, 4, 1), Some(1));
        assert_eq!(latest_epoch(6, 4, 2), Some(0));
    }
}
