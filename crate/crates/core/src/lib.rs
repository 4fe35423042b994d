//! Trace-driven model of an L1 data cache built from reduced-retention
//! STTRAM, where cache blocks expire a fixed number of cycles after they are
//! written. The crate provides the pieces needed to study that design point:
//!
//! - [`trace`]: the memory-reference event record plus deterministic
//!   synthetic trace generators,
//! - [`cache`]: a set-associative cache with per-block expiry, an MSHR, and
//!   miss classification that separates expiration misses from ordinary ones,
//! - [`prefetch`]: a PC-indexed stride prefetcher that is allowed to reload
//!   expired blocks, plus a near-side throttling (NST) baseline,
//! - [`metrics`]: event counters and an exact integer energy/latency ledger,
//! - [`sim`]: the loop that binds cache, prefetcher, and ledger to a trace,
//! - [`tuning`]: retention-time selection driven by expired-prefetch ratios
//!   (with a miss-rate fallback), the prefetch-distance map, and end-to-end
//!   policy runs.
//!
//! The crate is `no_std` (with `alloc`) so the model can be embedded in other
//! harnesses; file formats and the command-line front end live in the
//! companion `retsim` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cache;
pub mod metrics;
pub mod prefetch;
pub mod sim;
pub mod trace;
pub mod tuning;

pub use cache::{AccessResult, Cache, CacheGeometry, MissClass, Mshr, Outcome};
pub use metrics::{CounterSet, EnergyLedger, EnergyReport, RetentionConfig};
pub use prefetch::{NstConfig, NstState, PrefetchConfig, StridePrefetcher, Timeliness};
pub use sim::{SimConfig, Simulator};
pub use trace::{AccessKind, TraceEvent, TraceSource, VecTrace};
pub use tuning::{
    PartController, PartStep, PartThresholds, Policy, PolicyParams, PolicyRun, RetentionSet,
    TuningDecision, TuningMode,
};
