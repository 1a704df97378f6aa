use thiserror::Error;

use crate::woram::PosPointer;

/// Failures of the encryption layer.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("counter context (epoch {epoch}, index {index}) used twice under one key")]
    ContextReuse { epoch: u64, index: u64 },
    #[error("plaintext of {len} bytes does not fit in {capacity} bytes")]
    PayloadTooLarge { len: usize, capacity: usize },
    #[error("ciphertext has malformed padding or length")]
    MalformedPadding,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("block index {index} out of range for a device of {num_blocks} blocks")]
    IndexOutOfRange { index: u64, num_blocks: u64 },
    #[error("expected a {expected}-byte block, got {actual} bytes")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("logical address {addr} out of range [0, {limit})")]
    AddressOutOfRange { addr: u64, limit: u64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("pointer {pointer:?} lies outside its holding area of {limit} slots")]
    CorruptPointer { pointer: PosPointer, limit: u64 },
    #[error("infeasible packing: {0}")]
    InfeasiblePacking(String),
    #[error("{count} nodes of {node_bytes} bytes overflow a {capacity}-byte packed region")]
    Overflow { count: usize, node_bytes: usize, capacity: usize },
    #[error("step payload of {needed} bytes overflows the {capacity}-byte half block")]
    PayloadOverflow { needed: usize, capacity: usize },
    #[error("container has a bad magic number or unsupported version")]
    BadMagic,
    #[error("container state does not decrypt under this key")]
    WrongKey,
    #[error("traces disagree on geometry: {0}")]
    GeometryMismatch(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}

pub type Result<T> = std::result::Result<T, Error>;
