//! Comparison schemes: HiVE's randomized WoORAM and the DataLair write policy.

pub mod datalair;
pub mod hive;

pub use datalair::{datalair_adversary, run_attack, AttackConfig, AttackReport, DataLair};
pub use hive::HiveWoram;
