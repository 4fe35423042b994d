//! Set-associative L1 data cache with per-block retention expiry.
//!
//! Blocks become unreadable `retention_cycles` after they are filled. An
//! expired block is not silently removed: its frame keeps the tag (a "dead"
//! frame) until the frame is refilled, which is what lets a later demand
//! access to the same block be classified as an *expiration miss* — the
//! block was present, it had just decayed. Expiry is evaluated lazily,
//! whenever a set is touched by an access, a fill, or an explicit sweep;
//! each block's expiration is reported exactly once, at the first touch that
//! observes it.
//!
//! Victim selection is LRU over all occupied frames, live or dead, with
//! recency stamped by demand accesses. Dead frames keep (and refresh) their
//! stamps, so block residency does not depend on the retention limit — only
//! readability does. With an infinite retention limit the cache degenerates
//! to a conventional LRU cache.
//!
//! Misses are tracked in an MSHR with bounded capacity. Demand misses merge
//! into an in-flight entry for the same block when one exists; a demand miss
//! that needs a free slot while the MSHR is full stalls until the earliest
//! outstanding fill completes. Prefetches never stall: they are dropped when
//! the MSHR is full.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::metrics::RetentionConfig;
use crate::trace::{AccessKind, TraceEvent};

/// Cache shape. Capacity and block size are in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheGeometry {
    pub capacity: u64,
    pub block_size: u64,
    pub associativity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    ZeroField,
    BlockSizeNotPowerOfTwo(u64),
    CapacityNotDivisible,
    SetCountNotPowerOfTwo(u64),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::ZeroField => write!(f, "geometry fields must be non-zero"),
            GeometryError::BlockSizeNotPowerOfTwo(b) => {
                write!(f, "block size {b} is not a power of two")
            }
            GeometryError::CapacityNotDivisible => {
                write!(f, "capacity must be a multiple of block_size * associativity")
            }
            GeometryError::SetCountNotPowerOfTwo(s) => {
                write!(f, "derived set count {s} is not a power of two")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

impl CacheGeometry {
    pub fn new(capacity: u64, block_size: u64, associativity: u64) -> Result<Self, GeometryError> {
        if capacity == 0 || block_size == 0 || associativity == 0 {
            return Err(GeometryError::ZeroField);
        }
        if !block_size.is_power_of_two() {
            return Err(GeometryError::BlockSizeNotPowerOfTwo(block_size));
        }
        if !capacity.is_multiple_of(block_size * associativity) {
            return Err(GeometryError::CapacityNotDivisible);
        }
        let sets = capacity / (block_size * associativity);
        if !sets.is_power_of_two() {
            return Err(GeometryError::SetCountNotPowerOfTwo(sets));
        }
        Ok(CacheGeometry {
            capacity,
            block_size,
            associativity,
        })
    }

    /// The 32 KB / 64 B / 4-way L1D shape used throughout.
    pub fn l1_32k() -> Self {
        CacheGeometry::new(32 * 1024, 64, 4).unwrap()
    }

    pub fn num_sets(&self) -> u64 {
        self.capacity / (self.block_size * self.associativity)
    }

    /// Block-aligned address containing `address`.
    pub fn block_addr(&self, address: u64) -> u64 {
        address & !(self.block_size - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissClass {
    /// Block absent outright.
    NonExpiration,
    /// Block present but past its retention limit.
    Expiration,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    tag: u64,
    dirty: bool,
    /// Set when the block was brought in by a prefetch and no demand access
    /// has used it yet.
    prefetched: bool,
    expiry_cycle: u64,
    lru: u64,
}

#[derive(Debug, Clone, Copy)]
enum Frame {
    Empty,
    Live(Block),
    /// Expired block: tag sticks around until the frame is reused, recency
    /// keeps counting so residency is independent of the retention limit.
    Dead { tag: u64, lru: u64 },
}

/// One block crossing its retention limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Expiration {
    pub block_addr: u64,
    /// The block was prefetched and never used by a demand access.
    pub was_unused_prefetch: bool,
    pub was_dirty: bool,
}

/// A live block displaced by a fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictionReport {
    pub block_addr: u64,
    pub dirty: bool,
    pub unused_prefetch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillOrigin {
    Demand,
    Prefetch,
}

/// One outstanding miss.
#[derive(Debug, Clone, Copy)]
pub struct MshrEntry {
    pub block_addr: u64,
    pub origin: FillOrigin,
    pub issue_cycle: u64,
    pub ready_cycle: u64,
    /// A demand access asked for this block while it was in flight.
    pub demanded: bool,
    write_requested: bool,
    lru_stamp: u64,
}

/// Miss status holding registers: at most one entry per block address.
#[derive(Debug, Clone)]
pub struct Mshr {
    capacity: usize,
    entries: Vec<MshrEntry>,
}

impl Mshr {
    pub fn new(capacity: usize) -> Self {
        Mshr {
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn outstanding(&self, block_addr: u64) -> bool {
        self.entries.iter().any(|e| e.block_addr == block_addr)
    }

    /// Earliest completion cycle among outstanding entries.
    pub fn min_ready(&self) -> Option<u64> {
        self.entries.iter().map(|e| e.ready_cycle).min()
    }

    /// Latest completion cycle among outstanding entries.
    pub fn max_ready(&self) -> Option<u64> {
        self.entries.iter().map(|e| e.ready_cycle).max()
    }

    fn find_mut(&mut self, block_addr: u64) -> Option<&mut MshrEntry> {
        self.entries.iter_mut().find(|e| e.block_addr == block_addr)
    }

    fn allocate(&mut self, entry: MshrEntry) {
        debug_assert!(!self.is_full());
        debug_assert!(!self.outstanding(entry.block_addr));
        self.entries.push(entry);
    }

    /// Removes and returns the next entry completing by `now`, in
    /// `(ready, issue, block)` order so completion is deterministic.
    fn take_ready(&mut self, now: u64) -> Option<MshrEntry> {
        let idx = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.ready_cycle <= now)
            .min_by_key(|(_, e)| (e.ready_cycle, e.issue_cycle, e.block_addr))
            .map(|(i, _)| i)?;
        Some(self.entries.remove(idx))
    }
}

/// A completed fill, with everything the caller needs for accounting.
#[derive(Debug, Clone)]
pub struct FillReport {
    pub block_addr: u64,
    pub origin: FillOrigin,
    pub issue_cycle: u64,
    pub ready_cycle: u64,
    /// A demand access merged into this entry while it was in flight.
    pub demanded_while_inflight: bool,
    /// The fill re-loaded a block whose expired image was still in the set.
    pub reloaded_expired: bool,
    pub evicted: Option<EvictionReport>,
    /// Expirations observed while touching the set at fill time.
    pub expirations: Vec<Expiration>,
}

/// Result of one demand access.
#[derive(Debug, Clone)]
pub struct AccessResult {
    pub outcome: Outcome,
    pub miss_class: Option<MissClass>,
    /// Cycles until the data was available to the core.
    pub latency_cycles: u64,
    /// Cycles spent waiting for a free MSHR slot (included in latency).
    pub stall_cycles: u64,
    /// The access hit a block still flagged as prefetched (flag now cleared).
    pub hit_was_prefetched: bool,
    /// The access merged into an in-flight entry instead of allocating.
    pub merged: bool,
    /// The merge target was an undemanded prefetch — a late prefetch.
    pub merged_into_prefetch: bool,
    /// The access allocated a new MSHR entry.
    pub mshr_allocated: bool,
    /// Fills that completed while this access was processed.
    pub fills: Vec<FillReport>,
    /// Expirations observed in the accessed set.
    pub expirations_observed: Vec<Expiration>,
}

/// Outcome of trying to issue a prefetch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchIssue {
    Issued,
    /// Block is live and unexpired; nothing to do. An expired (dead) image
    /// never suppresses a prefetch — reloading those is the point.
    AlreadyPresent,
    /// A fetch of this block is already in flight.
    AlreadyPending,
    /// MSHR full: prefetches are dropped, never stalled.
    MshrFull,
}

#[derive(Debug, Clone)]
pub struct MigrationReport {
    pub migrated_blocks: u64,
    pub expirations: Vec<Expiration>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheError {
    /// Switching to the configuration already in effect.
    SameConfiguration,
}

impl fmt::Display for CacheError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CacheError::SameConfiguration => {
                write!(f, "retention switch targets the active configuration")
            }
        }
    }
}

impl core::error::Error for CacheError {}

pub struct Cache {
    geometry: CacheGeometry,
    retention: RetentionConfig,
    sets: Vec<Vec<Frame>>,
    mshr: Mshr,
    memory_latency: u64,
    /// Demand-access sequence counter; the recency clock.
    seq: u64,
}

impl Cache {
    pub fn new(
        geometry: CacheGeometry,
        retention: RetentionConfig,
        mshr_capacity: usize,
        memory_latency: u64,
    ) -> Self {
        let sets = vec![vec![Frame::Empty; geometry.associativity as usize]; geometry.num_sets() as usize];
        Cache {
            geometry,
            retention,
            sets,
            mshr: Mshr::new(mshr_capacity),
            memory_latency,
            seq: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn retention(&self) -> &RetentionConfig {
        &self.retention
    }

    pub fn mshr(&self) -> &Mshr {
        &self.mshr
    }

    pub fn memory_latency(&self) -> u64 {
        self.memory_latency
    }

    fn locate(&self, block_addr: u64) -> (usize, u64) {
        let block = block_addr / self.geometry.block_size;
        let set = (block % self.geometry.num_sets()) as usize;
        let tag = block / self.geometry.num_sets();
        (set, tag)
    }

    /// Turns every live block past its limit into a dead frame, reporting
    /// each expiration exactly once.
    fn expire_set(&mut self, set: usize, now: u64) -> Vec<Expiration> {
        let num_sets = self.geometry.num_sets();
        let block_size = self.geometry.block_size;
        let mut out = Vec::new();
        for frame in &mut self.sets[set] {
            if let Frame::Live(b) = frame {
                if now >= b.expiry_cycle {
                    out.push(Expiration {
                        block_addr: (b.tag * num_sets + set as u64) * block_size,
                        was_unused_prefetch: b.prefetched,
                        was_dirty: b.dirty,
                    });
                    *frame = Frame::Dead {
                        tag: b.tag,
                        lru: b.lru,
                    };
                }
            }
        }
        out
    }

    /// Sweeps every set at `now`. Used at window boundaries and end of run
    /// so expirations are attributed before counters are read.
    pub fn drain_expired(&mut self, now: u64) -> Vec<Expiration> {
        let mut out = Vec::new();
        for set in 0..self.sets.len() {
            out.extend(self.expire_set(set, now));
        }
        out
    }

    /// Completes every outstanding fill with `ready_cycle <= now`, each at
    /// its own completion cycle.
    pub fn pump(&mut self, now: u64) -> Vec<FillReport> {
        let mut out = Vec::new();
        while let Some(entry) = self.mshr.take_ready(now) {
            out.push(self.fill(entry));
        }
        out
    }

    /// Installs a completed fetch. Prefers the frame holding the block's
    /// expired image, then an empty frame, then the LRU frame live or dead.
    fn fill(&mut self, entry: MshrEntry) -> FillReport {
        let (set, tag) = self.locate(entry.block_addr);
        let at = entry.ready_cycle;
        let expirations = self.expire_set(set, at);

        let num_sets = self.geometry.num_sets();
        let block_size = self.geometry.block_size;
        let frames = &mut self.sets[set];
        let mut reloaded_expired = false;
        let mut target = None;
        for (i, frame) in frames.iter().enumerate() {
            match frame {
                Frame::Live(b) if b.tag == tag => {
                    debug_assert!(false, "fill for a block that is already live");
                    target = Some(i);
                    break;
                }
                Frame::Dead { tag: t, .. } if *t == tag => {
                    reloaded_expired = true;
                    target = Some(i);
                    break;
                }
                _ => {}
            }
        }
        if target.is_none() {
            target = frames.iter().position(|f| matches!(f, Frame::Empty));
        }
        let mut evicted = None;
        let idx = match target {
            Some(i) => i,
            None => {
                // LRU over all occupied frames, ties broken by way index.
                let i = frames
                    .iter()
                    .enumerate()
                    .min_by_key(|(way, f)| match f {
                        Frame::Live(b) => (b.lru, *way),
                        Frame::Dead { lru, .. } => (*lru, *way),
                        Frame::Empty => unreachable!(),
                    })
                    .map(|(i, _)| i)
                    .expect("set has at least one frame");
                if let Frame::Live(b) = &frames[i] {
                    evicted = Some(EvictionReport {
                        block_addr: (b.tag * num_sets + set as u64) * block_size,
                        dirty: b.dirty,
                        unused_prefetch: b.prefetched,
                    });
                }
                i
            }
        };

        let undemanded_prefetch = entry.origin == FillOrigin::Prefetch && !entry.demanded;
        let lru = if undemanded_prefetch {
            // Stamp with the most recent demand so fresh prefetches are not
            // immediate eviction victims.
            self.seq
        } else {
            entry.lru_stamp
        };
        self.sets[set][idx] = Frame::Live(Block {
            tag,
            dirty: entry.write_requested,
            prefetched: undemanded_prefetch,
            expiry_cycle: at.saturating_add(self.retention.retention_cycles),
            lru,
        });

        FillReport {
            block_addr: entry.block_addr,
            origin: entry.origin,
            issue_cycle: entry.issue_cycle,
            ready_cycle: entry.ready_cycle,
            demanded_while_inflight: entry.origin == FillOrigin::Prefetch && entry.demanded,
            reloaded_expired,
            evicted,
            expirations,
        }
    }

    /// One demand access at `now`. Completes due fills first, then expires
    /// the addressed set, then resolves the access.
    pub fn access(&mut self, event: &TraceEvent, now: u64) -> AccessResult {
        let fills = self.pump(now);
        self.seq += 1;
        let stamp = self.seq;
        let is_write = event.kind == AccessKind::Write;

        let block_addr = self.geometry.block_addr(event.address);
        let (set, tag) = self.locate(block_addr);
        let expirations_observed = self.expire_set(set, now);

        // Hit path: live, unexpired block.
        for frame in &mut self.sets[set] {
            if let Frame::Live(b) = frame {
                if b.tag == tag {
                    b.lru = stamp;
                    let hit_was_prefetched = b.prefetched;
                    b.prefetched = false;
                    let latency = if is_write {
                        b.dirty = true;
                        self.retention.write_latency
                    } else {
                        self.retention.hit_latency
                    };
                    return AccessResult {
                        outcome: Outcome::Hit,
                        miss_class: None,
                        latency_cycles: latency,
                        stall_cycles: 0,
                        hit_was_prefetched,
                        merged: false,
                        merged_into_prefetch: false,
                        mshr_allocated: false,
                        fills,
                        expirations_observed,
                    };
                }
            }
        }

        // Miss. Present-but-expired ⇒ expiration miss; the dead frame's
        // recency still advances so residency matches a hit's.
        let mut expired_present = false;
        for frame in &mut self.sets[set] {
            if let Frame::Dead { tag: t, lru } = frame {
                if *t == tag {
                    expired_present = true;
                    *lru = stamp;
                    break;
                }
            }
        }
        let miss_class = if expired_present {
            MissClass::Expiration
        } else {
            MissClass::NonExpiration
        };

        if let Some(entry) = self.mshr.find_mut(block_addr) {
            let merged_into_prefetch = entry.origin == FillOrigin::Prefetch && !entry.demanded;
            entry.demanded = true;
            entry.write_requested |= is_write;
            entry.lru_stamp = stamp;
            let latency = entry.ready_cycle - now;
            return AccessResult {
                outcome: Outcome::Miss,
                miss_class: Some(miss_class),
                latency_cycles: latency,
                stall_cycles: 0,
                hit_was_prefetched: false,
                merged: true,
                merged_into_prefetch,
                mshr_allocated: false,
                fills,
                expirations_observed,
            };
        }

        // Allocate, stalling for a slot if the MSHR is full.
        let mut fills = fills;
        let mut stall = 0;
        while self.mshr.is_full() {
            let next_ready = self.mshr.min_ready().expect("full MSHR is non-empty");
            fills.extend(self.pump(next_ready));
            stall = next_ready - now;
        }
        let issue = now + stall;
        self.mshr.allocate(MshrEntry {
            block_addr,
            origin: FillOrigin::Demand,
            issue_cycle: issue,
            ready_cycle: issue + self.memory_latency,
            demanded: true,
            write_requested: is_write,
            lru_stamp: stamp,
        });

        AccessResult {
            outcome: Outcome::Miss,
            miss_class: Some(miss_class),
            latency_cycles: stall + self.memory_latency,
            stall_cycles: stall,
            hit_was_prefetched: false,
            merged: false,
            merged_into_prefetch: false,
            mshr_allocated: true,
            fills,
            expirations_observed,
        }
    }

    /// Queues a prefetch of `block_addr`. Never stalls and never refetches a
    /// live block, but happily refetches an expired one.
    pub fn issue_prefetch(&mut self, block_addr: u64, now: u64) -> PrefetchIssue {
        debug_assert_eq!(block_addr, self.geometry.block_addr(block_addr));
        if self.probe_live_unexpired(block_addr, now) {
            return PrefetchIssue::AlreadyPresent;
        }
        if self.mshr.outstanding(block_addr) {
            return PrefetchIssue::AlreadyPending;
        }
        if self.mshr.is_full() {
            return PrefetchIssue::MshrFull;
        }
        self.mshr.allocate(MshrEntry {
            block_addr,
            origin: FillOrigin::Prefetch,
            issue_cycle: now,
            ready_cycle: now + self.memory_latency,
            demanded: false,
            write_requested: false,
            lru_stamp: self.seq,
        });
        PrefetchIssue::Issued
    }

    /// True when the block is resident and still readable at `now`.
    pub fn probe_live_unexpired(&self, block_addr: u64, now: u64) -> bool {
        let (set, tag) = self.locate(block_addr);
        self.sets[set].iter().any(|f| match f {
            Frame::Live(b) => b.tag == tag && now < b.expiry_cycle,
            _ => false,
        })
    }

    /// Re-times every live block under a new retention configuration, as if
    /// rewritten at `now`. The flat migration overhead is charged by the
    /// caller's ledger.
    pub fn switch_retention(
        &mut self,
        new: RetentionConfig,
        now: u64,
    ) -> Result<MigrationReport, CacheError> {
        if new == self.retention {
            return Err(CacheError::SameConfiguration);
        }
        let expirations = self.drain_expired(now);
        let mut migrated = 0;
        for set in &mut self.sets {
            for frame in set.iter_mut() {
                if let Frame::Live(b) = frame {
                    b.expiry_cycle = now.saturating_add(new.retention_cycles);
                    migrated += 1;
                }
            }
        }
        self.retention = new;
        Ok(MigrationReport {
            migrated_blocks: migrated,
            expirations,
        })
    }

    /// Live blocks still flagged as prefetched (never demanded).
    pub fn count_live_prefetched(&self) -> u64 {
        self.sets
            .iter()
            .flatten()
            .filter(|f| matches!(f, Frame::Live(b) if b.prefetched))
            .count() as u64
    }

    /// Structural self-check for tests: tags are unique per set.
    pub fn validate(&self) -> Result<(), &'static str> {
        for set in &self.sets {
            for (i, a) in set.iter().enumerate() {
                let ta = match a {
                    Frame::Live(b) => Some(b.tag),
                    Frame::Dead { tag, .. } => Some(*tag),
                    Frame::Empty => None,
                };
                let Some(ta) = ta else { continue };
                for b in &set[i + 1..] {
                    let tb = match b {
                        Frame::Live(b) => Some(b.tag),
                        Frame::Dead { tag, .. } => Some(*tag),
                        Frame::Empty => None,
                    };
                    if tb == Some(ta) {
                        return Err("duplicate tag in set");
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOCK: u64 = 2_000_000_000;

    fn read(address: u64, cycle: u64) -> TraceEvent {
        TraceEvent {
            cycle,
            pc: 0x400,
            address,
            kind: AccessKind::Read,
        }
    }

    fn write(address: u64, cycle: u64) -> TraceEvent {
        TraceEvent {
            cycle,
            pc: 0x400,
            address,
            kind: AccessKind::Write,
        }
    }

    fn l1_25us() -> Cache {
        Cache::new(
            CacheGeometry::l1_32k(),
            RetentionConfig::stt_25us(CLOCK),
            8,
            100,
        )
    }

    #[test]
    fn geometry_validation() {
        assert!(CacheGeometry::new(32 * 1024, 64, 4).is_ok());
        assert_eq!(CacheGeometry::l1_32k().num_sets(), 128);
        assert_eq!(
            CacheGeometry::new(0, 64, 4).unwrap_err(),
            GeometryError::ZeroField
        );
        assert_eq!(
            CacheGeometry::new(32 * 1024, 48, 4).unwrap_err(),
            GeometryError::BlockSizeNotPowerOfTwo(48)
        );
        assert_eq!(
            CacheGeometry::new(40 * 1024, 64, 7).unwrap_err(),
            GeometryError::CapacityNotDivisible
        );
        assert_eq!(
            CacheGeometry::new(24 * 1024, 64, 4).unwrap_err(),
            GeometryError::SetCountNotPowerOfTwo(96)
        );
    }

    #[test]
    fn cold_read_misses_and_allocates() {
        let mut cache = l1_25us();
        let r = cache.access(&read(0x1000, 0), 0);
        assert_eq!(r.outcome, Outcome::Miss);
        assert_eq!(r.miss_class, Some(MissClass::NonExpiration));
        assert_eq!(r.latency_cycles, 100);
        assert!(r.mshr_allocated);
        assert_eq!(cache.mshr().len(), 1);
    }

    #[test]
    fn reuse_before_expiry_hits_with_hit_latency() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        let r = cache.access(&read(0x1000, 40_000), 40_000);
        assert_eq!(r.outcome, Outcome::Hit);
        assert_eq!(r.latency_cycles, 1);
        assert_eq!(r.fills.len(), 1); // the cold fill completed on the way
    }

    #[test]
    fn reuse_after_expiry_is_an_expiration_miss() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        // Fill completes at 100, so the block decays at 50_100 < 60_000.
        let r = cache.access(&read(0x1000, 60_000), 60_000);
        assert_eq!(r.outcome, Outcome::Miss);
        assert_eq!(r.miss_class, Some(MissClass::Expiration));
        assert_eq!(r.expirations_observed.len(), 1);
        assert_eq!(r.expirations_observed[0].block_addr, 0x1000);
        assert!(!r.expirations_observed[0].was_unused_prefetch);
    }

    #[test]
    fn expiry_boundary_is_exclusive_of_the_limit_cycle() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        // Fill at 100; readable through 50_099, expired at 50_100.
        let r = cache.access(&read(0x1000, 50_099), 50_099);
        assert_eq!(r.outcome, Outcome::Hit);
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        let r = cache.access(&read(0x1000, 50_100), 50_100);
        assert_eq!(r.miss_class, Some(MissClass::Expiration));
    }

    #[test]
    fn write_hit_sets_dirty_and_pays_write_latency() {
        let mut cache = l1_25us();
        cache.access(&write(0x1000, 0), 0);
        let r = cache.access(&write(0x1000, 200), 200);
        assert_eq!(r.outcome, Outcome::Hit);
        assert_eq!(r.latency_cycles, 2); // 25 µs point has write latency 2
        // Expire it and confirm the write-back is reported as dirty.
        let expired = cache.drain_expired(60_000);
        assert_eq!(expired.len(), 1);
        assert!(expired[0].was_dirty);
    }

    #[test]
    fn demand_merges_into_inflight_demand() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        let r = cache.access(&read(0x1000, 50), 50);
        assert_eq!(r.outcome, Outcome::Miss);
        assert!(r.merged);
        assert!(!r.merged_into_prefetch);
        assert_eq!(r.latency_cycles, 50); // fill lands at 100
        assert_eq!(cache.mshr().len(), 1);
    }

    #[test]
    fn merged_write_dirties_the_eventual_fill() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        cache.access(&write(0x1000, 50), 50);
        cache.pump(200);
        let expired = cache.drain_expired(60_000);
        assert_eq!(expired.len(), 1);
        assert!(expired[0].was_dirty);
    }

    #[test]
    fn full_mshr_stalls_demand_until_a_fill_completes() {
        let mut cache = Cache::new(
            CacheGeometry::l1_32k(),
            RetentionConfig::stt_25us(CLOCK),
            2,
            100,
        );
        cache.access(&read(0x0000, 0), 0);
        cache.access(&read(0x10000, 0), 0);
        let r = cache.access(&read(0x20000, 10), 10);
        assert_eq!(r.stall_cycles, 90); // waits for the cycle-100 fill
        assert_eq!(r.latency_cycles, 190);
        assert!(r.mshr_allocated);
        // Both earlier fills were ready at cycle 100, so both completed.
        assert_eq!(r.fills.len(), 2);
    }

    #[test]
    fn prefetch_issue_paths() {
        let mut cache = Cache::new(
            CacheGeometry::l1_32k(),
            RetentionConfig::stt_25us(CLOCK),
            2,
            100,
        );
        assert_eq!(cache.issue_prefetch(0x1000, 0), PrefetchIssue::Issued);
        assert_eq!(
            cache.issue_prefetch(0x1000, 0),
            PrefetchIssue::AlreadyPending
        );
        assert_eq!(cache.issue_prefetch(0x2000, 0), PrefetchIssue::Issued);
        assert_eq!(cache.issue_prefetch(0x3000, 0), PrefetchIssue::MshrFull);
        cache.pump(100);
        assert_eq!(
            cache.issue_prefetch(0x1000, 150),
            PrefetchIssue::AlreadyPresent
        );
        // Once expired, the same block is prefetchable again.
        assert_eq!(cache.issue_prefetch(0x1000, 55_000), PrefetchIssue::Issued);
    }

    #[test]
    fn prefetch_reload_of_expired_block_is_flagged() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        cache.pump(100);
        assert_eq!(cache.issue_prefetch(0x1000, 60_000), PrefetchIssue::Issued);
        let fills = cache.pump(60_100);
        assert_eq!(fills.len(), 1);
        assert!(fills[0].reloaded_expired);
        assert_eq!(fills[0].origin, FillOrigin::Prefetch);
        // And the reload is a hit afterwards.
        let r = cache.access(&read(0x1000, 60_200), 60_200);
        assert_eq!(r.outcome, Outcome::Hit);
        assert!(r.hit_was_prefetched);
    }

    #[test]
    fn prefetched_hit_clears_the_flag_once() {
        let mut cache = l1_25us();
        cache.issue_prefetch(0x1000, 0);
        cache.pump(100);
        let r = cache.access(&read(0x1000, 200), 200);
        assert!(r.hit_was_prefetched);
        let r = cache.access(&read(0x1000, 300), 300);
        assert!(!r.hit_was_prefetched);
    }

    #[test]
    fn lru_evicts_least_recent_across_live_and_dead() {
        // SRAM config: no expiry, classic LRU. 4-way set; 5 distinct blocks
        // in one set evict the first touched.
        let geom = CacheGeometry::l1_32k();
        let mut cache = Cache::new(geom, RetentionConfig::sram(CLOCK), 8, 0);
        let set_stride = geom.block_size * geom.num_sets(); // same set, new tag
        let addr = |i: u64| 0x40 + i * set_stride;
        for i in 0..4 {
            cache.access(&read(addr(i), i * 10), i * 10);
        }
        // Touch block 0 so block 1 becomes LRU.
        cache.access(&read(addr(0), 100), 100);
        let r = cache.access(&read(addr(4), 110), 110);
        assert_eq!(r.outcome, Outcome::Miss);
        let fills = cache.pump(110);
        assert_eq!(fills.len(), 1);
        assert_eq!(fills[0].evicted.unwrap().block_addr, addr(1));
        cache.validate().unwrap();
    }

    #[test]
    fn switch_retention_retimes_live_blocks() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        cache.pump(100);
        let report = cache
            .switch_retention(RetentionConfig::stt_50us(CLOCK), 1000)
            .unwrap();
        assert_eq!(report.migrated_blocks, 1);
        assert!(report.expirations.is_empty());
        // New limit counts from the switch: 1000 + 100_000.
        let r = cache.access(&read(0x1000, 90_000), 90_000);
        assert_eq!(r.outcome, Outcome::Hit);
        let r = cache.access(&read(0x1000, 101_100), 101_100);
        assert_eq!(r.miss_class, Some(MissClass::Expiration));
    }

    #[test]
    fn switch_to_same_configuration_is_an_error() {
        let mut cache = l1_25us();
        let err = cache
            .switch_retention(RetentionConfig::stt_25us(CLOCK), 0)
            .unwrap_err();
        assert_eq!(err, CacheError::SameConfiguration);
    }

    #[test]
    fn switch_drains_expired_blocks_first() {
        let mut cache = l1_25us();
        cache.access(&read(0x1000, 0), 0);
        cache.pump(100);
        let report = cache
            .switch_retention(RetentionConfig::stt_1ms(CLOCK), 60_000)
            .unwrap();
        assert_eq!(report.migrated_blocks, 0);
        assert_eq!(report.expirations.len(), 1);
        // The expired image stays a dead frame: still an expiration miss.
        let r = cache.access(&read(0x1000, 60_001), 60_001);
        assert_eq!(r.miss_class, Some(MissClass::Expiration));
    }

    #[test]
    fn drain_expired_reports_unused_prefetch_flag() {
        let mut cache = l1_25us();
        cache.issue_prefetch(0x1000, 0);
        cache.pump(100);
        let expired = cache.drain_expired(60_000);
        assert_eq!(expired.len(), 1);
        assert!(expired[0].was_unused_prefetch);
        assert!(!expired[0].was_dirty);
    }

    #[test]
    fn sram_never_expires() {
        let geom = CacheGeometry::l1_32k();
        let mut cache = Cache::new(geom, RetentionConfig::sram(CLOCK), 8, 100);
        cache.access(&read(0x1000, 0), 0);
        let r = cache.access(&read(0x1000, u64::MAX / 2), u64::MAX / 2);
        assert_eq!(r.outcome, Outcome::Hit);
        assert_eq!(r.latency_cycles, 2); // SRAM hit latency
    }

    #[test]
    fn dead_frames_do_not_lose_residency_ordering() {
        // An expired block keeps its recency, so a burst of other fills
        // evicts by the same order a no-expiry cache would use.
        let geom = CacheGeometry::l1_32k();
        let mut cache = Cache::new(geom, RetentionConfig::stt_25us(CLOCK), 8, 0);
        let set_stride = geom.block_size * geom.num_sets();
        let addr = |i: u64| i * set_stride;
        for i in 0..4 {
            cache.access(&read(addr(i), i), i);
        }
        // All four expire; touch 0 (expiration miss refreshes its recency).
        let r = cache.access(&read(addr(0), 60_000), 60_000);
        assert_eq!(r.miss_class, Some(MissClass::Expiration));
        // A new block must displace block 1 (oldest untouched), not block 0.
        cache.access(&read(addr(4), 60_001), 60_001);
        let r = cache.access(&read(addr(0), 60_002), 60_002);
        assert_eq!(r.outcome, Outcome::Hit);
        cache.validate().unwrap();
    }
}
