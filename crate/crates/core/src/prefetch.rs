//! PC-indexed stride prefetching and the near-side throttling baseline.
//!
//! The prefetcher trains on every demand access and issues when a PC's
//! stride has been confirmed twice (2-bit confidence). It triggers on demand
//! misses and on demand hits that consume a prefetched block — the latter
//! keeps a stream alive once it is running ahead of the demand front. A
//! per-stream frontier remembers how far ahead the stream has requested, so
//! candidates are never duplicated, and no candidate is placed further than
//! `distance` blocks beyond the triggering access.
//!
//! Whether a candidate is actually fetched is the cache's call (it drops
//! prefetches for live unexpired blocks, in-flight blocks, and on a full
//! MSHR); crucially, an *expired* resident block does not suppress the
//! prefetch — re-fetching those before demand returns is what makes reduced
//! retention tolerable.

use alloc::vec::Vec;

use crate::cache::{AccessResult, FillOrigin, FillReport, MissClass, Outcome};
use crate::trace::TraceEvent;

/// Prefetch distances the hardware supports, shortest to longest.
pub const DISTANCES: [u32; 5] = [1, 4, 8, 16, 32];

const TABLE_ENTRIES: usize = 64;
const CONFIDENCE_MAX: u8 = 3;
const CONFIDENCE_ISSUE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefetchConfig {
    /// Candidates issued per trigger.
    pub degree: u32,
    /// Furthest candidate, in blocks ahead of the triggering access.
    pub distance: u32,
    /// Whether expiration misses trigger prefetching. Ordinary misses and
    /// prefetched-block hits always do.
    pub trigger_on_expiration_miss: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchConfigError {
    ZeroDegree,
    UnsupportedDistance(u32),
}

impl core::fmt::Display for PrefetchConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PrefetchConfigError::ZeroDegree => write!(f, "prefetch degree must be at least 1"),
            PrefetchConfigError::UnsupportedDistance(d) => {
                write!(f, "prefetch distance {d} is not one of {DISTANCES:?}")
            }
        }
    }
}

impl core::error::Error for PrefetchConfigError {}

impl PrefetchConfig {
    pub fn new(
        degree: u32,
        distance: u32,
        trigger_on_expiration_miss: bool,
    ) -> Result<Self, PrefetchConfigError> {
        if degree == 0 {
            return Err(PrefetchConfigError::ZeroDegree);
        }
        if !DISTANCES.contains(&distance) {
            return Err(PrefetchConfigError::UnsupportedDistance(distance));
        }
        Ok(PrefetchConfig {
            degree,
            distance,
            trigger_on_expiration_miss,
        })
    }
}

/// A block the prefetcher wants fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefetchRequest {
    pub block_addr: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct StrideEntry {
    valid: bool,
    pc: u64,
    last_address: u64,
    stride: i64,
    confidence: u8,
    /// Furthest block requested in the stride direction.
    frontier: u64,
    frontier_valid: bool,
}

pub struct StridePrefetcher {
    table: Vec<StrideEntry>,
    block_size: u64,
    config: PrefetchConfig,
}

impl StridePrefetcher {
    pub fn new(block_size: u64, config: PrefetchConfig) -> Self {
        StridePrefetcher {
            table: alloc::vec![StrideEntry::default(); TABLE_ENTRIES],
            block_size,
            config,
        }
    }

    pub fn config(&self) -> PrefetchConfig {
        self.config
    }

    pub fn set_distance(&mut self, distance: u32) {
        debug_assert!(DISTANCES.contains(&distance));
        self.config.distance = distance;
    }

    pub fn set_degree(&mut self, degree: u32) {
        debug_assert!(degree >= 1);
        self.config.degree = degree;
    }

    pub fn set_trigger_on_expiration_miss(&mut self, trigger: bool) {
        self.config.trigger_on_expiration_miss = trigger;
    }

    /// Forgets all trained streams (used between tuning phases).
    pub fn reset_table(&mut self) {
        self.table.fill(StrideEntry::default());
    }

    /// Trains on one demand access and returns the candidates it triggers.
    pub fn observe(&mut self, event: &TraceEvent, result: &AccessResult) -> Vec<PrefetchRequest> {
        let idx = (event.pc % TABLE_ENTRIES as u64) as usize;
        let entry = &mut self.table[idx];

        if !entry.valid || entry.pc != event.pc {
            *entry = StrideEntry {
                valid: true,
                pc: event.pc,
                last_address: event.address,
                ..StrideEntry::default()
            };
            return Vec::new();
        }

        let observed = (event.address as i64).wrapping_sub(entry.last_address as i64);
        if observed == entry.stride {
            entry.confidence = (entry.confidence + 1).min(CONFIDENCE_MAX);
        } else if entry.confidence <= 1 {
            entry.stride = observed;
            entry.confidence = 1;
            entry.frontier_valid = false;
        } else {
            entry.confidence -= 1;
        }
        entry.last_address = event.address;

        let miss = result.outcome == Outcome::Miss;
        let expiration = result.miss_class == Some(MissClass::Expiration);
        let triggers = if miss {
            self.config.trigger_on_expiration_miss || !expiration
        } else {
            result.hit_was_prefetched
        };
        if !triggers || entry.confidence < CONFIDENCE_ISSUE || entry.stride == 0 {
            return Vec::new();
        }

        Self::candidates(entry, event.address, self.block_size, &self.config)
    }

    fn candidates(
        entry: &mut StrideEntry,
        address: u64,
        block_size: u64,
        config: &PrefetchConfig,
    ) -> Vec<PrefetchRequest> {
        let stride = entry.stride;
        let up = stride > 0;
        let demand_blk = address & !(block_size - 1);
        let max_span = config.distance as u64 * block_size;

        // The demand stream may have moved past the old frontier, or
        // restarted far behind it (a fresh pass over the same region):
        // follow it forward, or drop a frontier that is out of the window.
        if entry.frontier_valid {
            if (up && demand_blk > entry.frontier) || (!up && demand_blk < entry.frontier) {
                entry.frontier = demand_blk;
            } else {
                let ahead_of_demand = if up {
                    entry.frontier.wrapping_sub(demand_blk)
                } else {
                    demand_blk.wrapping_sub(entry.frontier)
                };
                if ahead_of_demand > max_span {
                    entry.frontier_valid = false;
                }
            }
        }
        let mut out = Vec::new();
        let mut k: i64 = 1;
        while let Some(step) = stride.checked_mul(k) {
            let cand_blk = address.wrapping_add_signed(step) & !(block_size - 1);
            let ahead = if up {
                cand_blk.wrapping_sub(demand_blk)
            } else {
                demand_blk.wrapping_sub(cand_blk)
            };
            if ahead > max_span {
                break;
            }
            let behind_frontier = entry.frontier_valid
                && ((up && cand_blk <= entry.frontier) || (!up && cand_blk >= entry.frontier));
            if cand_blk != demand_blk && !behind_frontier {
                out.push(PrefetchRequest {
                    block_addr: cand_blk,
                });
                entry.frontier = cand_blk;
                entry.frontier_valid = true;
                if out.len() as u32 == config.degree {
                    break;
                }
            }
            k += 1;
        }
        out
    }
}

/// How a prefetched block ended up being used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timeliness {
    /// Demanded only after the fill completed: full mitigation.
    Timely,
    /// Demanded while still in flight: hid part of the miss latency.
    Late,
    /// Never demanded before it expired, was evicted, or the run ended.
    Unused,
}

/// Classifies one prefetch fill given the cycle of the first demand access
/// to the block after the prefetch was issued (if any).
pub fn classify_prefetch_timeliness(
    fill: &FillReport,
    first_demand_use: Option<u64>,
) -> Timeliness {
    debug_assert_eq!(fill.origin, FillOrigin::Prefetch);
    match first_demand_use {
        None => Timeliness::Unused,
        Some(use_cycle) if use_cycle < fill.ready_cycle => Timeliness::Late,
        Some(_) => Timeliness::Timely,
    }
}

/// Near-side throttling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NstConfig {
    /// Raise the distance when late/total exceeds this.
    pub raise_threshold: f64,
    /// Lower it when late/total drops below this.
    pub lower_threshold: f64,
    /// Demand accesses per evaluation window.
    pub window_demand_accesses: u64,
}

impl Default for NstConfig {
    fn default() -> Self {
        NstConfig {
            raise_threshold: 0.25,
            lower_threshold: 0.05,
            window_demand_accesses: 4096,
        }
    }
}

/// Near-side throttling: start at the shortest distance and raise it only
/// when enough prefetches arrive late, backing off when they stop being
/// late. A window with no prefetches leaves the distance unchanged.
#[derive(Debug, Clone, Copy)]
pub struct NstState {
    pub config: NstConfig,
    pub current_distance: u32,
    window_late: u64,
    window_prefetches: u64,
    window_demands: u64,
}

impl NstState {
    pub fn new(config: NstConfig) -> Self {
        NstState {
            config,
            current_distance: 1,
            window_late: 0,
            window_prefetches: 0,
            window_demands: 0,
        }
    }

    pub fn record_prefetch(&mut self) {
        self.window_prefetches += 1;
    }

    pub fn record_late_prefetch(&mut self) {
        self.window_late += 1;
    }

    /// Ticks the window clock; at a window boundary, re-evaluates and
    /// returns the distance to use from here on.
    pub fn on_demand_access(&mut self) -> Option<u32> {
        self.window_demands += 1;
        if self.window_demands >= self.config.window_demand_accesses {
            self.window_demands = 0;
            Some(nst_update(self))
        } else {
            None
        }
    }
}

/// Applies one NST window decision and resets the window counters.
pub fn nst_update(state: &mut NstState) -> u32 {
    if state.window_prefetches > 0 {
        let ratio = state.window_late as f64 / state.window_prefetches as f64;
        if ratio > state.config.raise_threshold {
            state.current_distance = step_up(state.current_distance);
        } else if ratio < state.config.lower_threshold {
            state.current_distance = step_down(state.current_distance);
        }
    }
    state.window_late = 0;
    state.window_prefetches = 0;
    state.current_distance
}

fn step_up(distance: u32) -> u32 {
    match DISTANCES.iter().position(|d| *d == distance) {
        Some(i) => DISTANCES[(i + 1).min(DISTANCES.len() - 1)],
        None => distance,
    }
}

fn step_down(distance: u32) -> u32 {
    match DISTANCES.iter().position(|d| *d == distance) {
        Some(i) => DISTANCES[i.saturating_sub(1)],
        None => distance,
    }
}
