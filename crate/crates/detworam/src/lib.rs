//! Deterministic write-only ORAM.
//!
//! Every logical write goes to the next slot of a circular holding area and
//! a fixed, address-independent slice of the main area is refreshed, so the
//! physical write locations depend only on the number of writes. A one-bit
//! diff pointer tells readers whether the main copy or the holding copy is
//! fresh. The position map is a b-ary trie that is stored in a second
//! instance of the same scheme and serves as its own position map.
//!
//! Also included: the toy and in-memory-map variants, a HiVE-style baseline,
//! a DataLair attack simulator, a trace verifier and a file container.

pub mod baselines;
pub mod container;
pub mod crypto;
pub mod detworam;
pub mod device;
pub mod error;
pub mod harness;
pub mod layout;
mod region;
pub mod stats;
pub mod superblock;
pub mod trie;
pub mod verifier;
pub mod woram;

pub use container::{create_container, open_container, ContainerConfig};
pub use crypto::{Cipher, CipherKey, CtrContext};
pub use detworam::{AuditReport, DetConfig, DetWoram};
pub use device::{filter_writes, AccessKind, BlockDevice, Trace, TraceEvent, TraceMeta};
pub use error::{CryptoError, Error, Result};
pub use layout::LayoutMode;
pub use woram::{FlatWoram, Geometry, ObliviousStore, PosPointer, ToyWoram};
