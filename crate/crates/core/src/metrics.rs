//! Event counters and the energy/latency ledger.
//!
//! Energy is accumulated in integer units of 1e-7 nJ (0.1 fJ). At that
//! granularity every per-event cost in the built-in technology table and the
//! per-cycle leakage of every configuration at a 2 GHz clock are exactly
//! representable, so ledger totals are exact integers and additivity holds
//! bit-for-bit; floating point only appears when a report is displayed.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Energy units per nanojoule. One unit is 1e-7 nJ.
pub const UNITS_PER_NJ: u64 = 10_000_000;

/// Flat cost of one retention-mode switch: rewriting live blocks into the
/// newly tuned array region stalls the cache for this many cycles.
pub const MIGRATION_CYCLES: u64 = 2560;

/// Flat energy of one retention-mode switch: 8.192 nJ.
pub const MIGRATION_ENERGY_UNITS: u64 = 8192 * UNITS_PER_NJ / 1000;

/// Monotone event counters kept by the simulator. `since` turns two
/// snapshots into per-window statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CounterSet {
    pub demand_accesses: u64,
    pub demand_hits: u64,
    pub demand_misses: u64,
    /// Demand misses whose block was still present but past its retention
    /// limit (including misses that merged into an in-flight refetch of such
    /// a block).
    pub expiration_misses: u64,
    /// Prefetches accepted into the MSHR.
    pub total_prefetches: u64,
    /// All MSHR allocations: demand misses that allocated plus prefetches.
    pub total_mshr_requests: u64,
    /// Prefetched blocks that expired before any demand access used them.
    pub expired_unused_prefetches: u64,
    /// Demand accesses that arrived while their block's prefetch was still
    /// in flight.
    pub late_prefetches: u64,
    /// Prefetched blocks consumed by a demand hit after the fill completed.
    pub timely_prefetches: u64,
    /// Prefetched blocks never consumed: expired, evicted, or still unread
    /// at the end of the run.
    pub unused_prefetches: u64,
    /// Dirty blocks written back on eviction or expiry.
    pub writebacks: u64,
    /// Prefetch fills that re-loaded a block whose expired image was still
    /// in the set.
    pub prefetchable_expired_reloads: u64,
    /// Blocks that crossed their retention limit.
    pub expirations: u64,
    pub fills: u64,
    /// Live blocks displaced to make room for a fill.
    pub evictions: u64,
}

impl CounterSet {
    /// Counters accumulated since an earlier snapshot.
    pub fn since(&self, earlier: &CounterSet) -> CounterSet {
        CounterSet {
            demand_accesses: self.demand_accesses - earlier.demand_accesses,
            demand_hits: self.demand_hits - earlier.demand_hits,
            demand_misses: self.demand_misses - earlier.demand_misses,
            expiration_misses: self.expiration_misses - earlier.expiration_misses,
            total_prefetches: self.total_prefetches - earlier.total_prefetches,
            total_mshr_requests: self.total_mshr_requests - earlier.total_mshr_requests,
            expired_unused_prefetches: self.expired_unused_prefetches
                - earlier.expired_unused_prefetches,
            late_prefetches: self.late_prefetches - earlier.late_prefetches,
            timely_prefetches: self.timely_prefetches - earlier.timely_prefetches,
            unused_prefetches: self.unused_prefetches - earlier.unused_prefetches,
            writebacks: self.writebacks - earlier.writebacks,
            prefetchable_expired_reloads: self.prefetchable_expired_reloads
                - earlier.prefetchable_expired_reloads,
            expirations: self.expirations - earlier.expirations,
            fills: self.fills - earlier.fills,
            evictions: self.evictions - earlier.evictions,
        }
    }

    /// Prefetches as a share of all MSHR traffic; 0 when there was none.
    pub fn all_pf(&self) -> f64 {
        if self.total_mshr_requests == 0 {
            0.0
        } else {
            self.total_prefetches as f64 / self.total_mshr_requests as f64
        }
    }

    /// Share of prefetches that expired unused; 0 when nothing was prefetched.
    pub fn expired_pf(&self) -> f64 {
        if self.total_prefetches == 0 {
            0.0
        } else {
            self.expired_unused_prefetches as f64 / self.total_prefetches as f64
        }
    }

    /// `(all_pf, expired_pf)` for one tuning window.
    pub fn ratios(&self) -> (f64, f64) {
        (self.all_pf(), self.expired_pf())
    }

    /// Demand miss rate; 0 when the window saw no demand accesses.
    pub fn miss_rate(&self) -> f64 {
        if self.demand_accesses == 0 {
            0.0
        } else {
            self.demand_misses as f64 / self.demand_accesses as f64
        }
    }
}

/// One row of the technology table: retention limit plus per-event energy
/// and latency of a cache built at that retention point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetentionConfig {
    pub label: String,
    /// Cycles a block stays readable after it is written. `u64::MAX` means
    /// the block never expires (SRAM).
    pub retention_cycles: u64,
    pub write_energy_units: u64,
    pub hit_energy_units: u64,
    pub leakage_units_per_cycle: u64,
    pub hit_latency: u64,
    pub write_latency: u64,
}

impl RetentionConfig {
    /// SRAM baseline: never expires, fast but leaky.
    pub fn sram(clock_hz: u64) -> Self {
        RetentionConfig {
            label: String::from("SRAM"),
            retention_cycles: u64::MAX,
            write_energy_units: 20_000,  // 0.002 nJ
            hit_energy_units: 80_000,    // 0.008 nJ
            leakage_units_per_cycle: leakage_units_per_cycle(75_968_000, clock_hz),
            hit_latency: 2,
            write_latency: 2,
        }
    }

    /// STTRAM relaxed to a 25 µs retention limit.
    pub fn stt_25us(clock_hz: u64) -> Self {
        Self::stt("STT-25us", 25, 60_000, 11_778_000, 2, clock_hz)
    }

    /// STTRAM relaxed to a 50 µs retention limit.
    pub fn stt_50us(clock_hz: u64) -> Self {
        Self::stt("STT-50us", 50, 70_000, 11_778_000, 3, clock_hz)
    }

    /// STTRAM relaxed to a 75 µs retention limit.
    pub fn stt_75us(clock_hz: u64) -> Self {
        Self::stt("STT-75us", 75, 70_000, 11_778_000, 3, clock_hz)
    }

    /// STTRAM relaxed to a 100 µs retention limit.
    pub fn stt_100us(clock_hz: u64) -> Self {
        Self::stt("STT-100us", 100, 80_000, 11_778_000, 3, clock_hz)
    }

    /// STTRAM at a 1 ms retention limit, the longest tuning candidate.
    pub fn stt_1ms(clock_hz: u64) -> Self {
        Self::stt("STT-1ms", 1000, 110_000, 11_365_000, 4, clock_hz)
    }

    fn stt(
        label: &str,
        retention_us: u64,
        write_energy_units: u64,
        leakage_mw_micro: u64,
        write_latency: u64,
        clock_hz: u64,
    ) -> Self {
        RetentionConfig {
            label: String::from(label),
            retention_cycles: retention_cycles(retention_us, clock_hz),
            write_energy_units,
            hit_energy_units: 50_000, // 0.005 nJ for every STTRAM point
            leakage_units_per_cycle: leakage_units_per_cycle(leakage_mw_micro, clock_hz),
            hit_latency: 1,
            write_latency,
        }
    }

    pub fn never_expires(&self) -> bool {
        self.retention_cycles == u64::MAX
    }
}

/// Cycles per `retention_us` microseconds at `clock_hz`.
fn retention_cycles(retention_us: u64, clock_hz: u64) -> u64 {
    (retention_us as u128 * clock_hz as u128 / 1_000_000) as u64
}

/// Leakage power (given in micro-milliwatts, i.e. 1e-6 mW) converted to
/// energy units per cycle. Rounds to nearest; exact for the built-in table
/// at 2 GHz. The division is quantized once here, so leakage totals are
/// strictly proportional to elapsed cycles.
fn leakage_units_per_cycle(mw_micro: u64, clock_hz: u64) -> u64 {
    ((mw_micro as u128 * 10_000_000 + clock_hz as u128 / 2) / clock_hz as u128) as u64
}

/// Per-event energy classes the ledger knows how to price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyEvent {
    ReadHit,
    /// A write hit pays the array read (tag/way access) plus the write.
    WriteHit,
    /// A fill writes the incoming block into the array.
    Fill,
    /// A write-back re-reads the dirty block and writes it out; only the
    /// array write is charged here, the downstream cost is off-chip.
    Writeback,
}

/// Exact integer energy/latency accumulator for one simulation.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    dynamic_units: u128,
    leakage_units: u128,
    migration_units: u128,
    demand_latency_cycles: u64,
    migration_cycles: u64,
    leak_mark: u64,
    write_units: u64,
    hit_units: u64,
    leak_per_cycle: u64,
}

impl EnergyLedger {
    pub fn new(initial: &RetentionConfig) -> Self {
        Self::starting_at(initial, 0)
    }

    /// Ledger whose leakage clock starts at `start_cycle` instead of 0.
    pub fn starting_at(initial: &RetentionConfig, start_cycle: u64) -> Self {
        EnergyLedger {
            dynamic_units: 0,
            leakage_units: 0,
            migration_units: 0,
            demand_latency_cycles: 0,
            migration_cycles: 0,
            leak_mark: start_cycle,
            write_units: initial.write_energy_units,
            hit_units: initial.hit_energy_units,
            leak_per_cycle: initial.leakage_units_per_cycle,
        }
    }

    /// Accrues leakage for the active configuration up to `cycle`.
    /// Earlier cycles are a no-op, so callers may advance conservatively.
    pub fn advance_to(&mut self, cycle: u64) {
        if cycle > self.leak_mark {
            self.leakage_units += (cycle - self.leak_mark) as u128 * self.leak_per_cycle as u128;
            self.leak_mark = cycle;
        }
    }

    /// Switches the active configuration at `cycle`; leakage up to that
    /// point is charged at the old rate.
    pub fn set_config(&mut self, config: &RetentionConfig, cycle: u64) {
        self.advance_to(cycle);
        self.write_units = config.write_energy_units;
        self.hit_units = config.hit_energy_units;
        self.leak_per_cycle = config.leakage_units_per_cycle;
    }

    /// Charges one per-event cost at the active configuration's prices.
    pub fn record(&mut self, event: EnergyEvent) {
        let units = match event {
            EnergyEvent::ReadHit => self.hit_units,
            EnergyEvent::WriteHit => self.hit_units + self.write_units,
            EnergyEvent::Fill | EnergyEvent::Writeback => self.write_units,
        };
        self.dynamic_units += units as u128;
    }

    /// Charges the flat overhead of one retention-mode switch.
    pub fn record_migration(&mut self) {
        self.migration_units += MIGRATION_ENERGY_UNITS as u128;
        self.migration_cycles += MIGRATION_CYCLES;
    }

    /// Adds the latency a demand access observed.
    pub fn add_demand_latency(&mut self, cycles: u64) {
        self.demand_latency_cycles += cycles;
    }

    pub fn report(&self) -> EnergyReport {
        EnergyReport {
            dynamic_units: self.dynamic_units,
            leakage_units: self.leakage_units,
            migration_units: self.migration_units,
            demand_latency_cycles: self.demand_latency_cycles,
            migration_cycles: self.migration_cycles,
        }
    }
}

/// Energy and latency totals of one run, in exact integer units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnergyReport {
    pub dynamic_units: u128,
    pub leakage_units: u128,
    pub migration_units: u128,
    pub demand_latency_cycles: u64,
    pub migration_cycles: u64,
}

impl EnergyReport {
    pub fn total_units(&self) -> u128 {
        self.dynamic_units + self.leakage_units + self.migration_units
    }

    /// Total latency: cycles demand accesses waited plus cycles the cache
    /// was stalled migrating between retention modes.
    pub fn total_latency_cycles(&self) -> u64 {
        self.demand_latency_cycles + self.migration_cycles
    }

    pub fn dynamic_nj(&self) -> f64 {
        units_to_nj(self.dynamic_units)
    }

    pub fn leakage_nj(&self) -> f64 {
        units_to_nj(self.leakage_units)
    }

    pub fn migration_nj(&self) -> f64 {
        units_to_nj(self.migration_units)
    }

    pub fn total_nj(&self) -> f64 {
        units_to_nj(self.total_units())
    }

    /// Field-wise sum, for stitching reports of consecutive trace segments.
    pub fn merged(&self, other: &EnergyReport) -> EnergyReport {
        EnergyReport {
            dynamic_units: self.dynamic_units + other.dynamic_units,
            leakage_units: self.leakage_units + other.leakage_units,
            migration_units: self.migration_units + other.migration_units,
            demand_latency_cycles: self.demand_latency_cycles + other.demand_latency_cycles,
            migration_cycles: self.migration_cycles + other.migration_cycles,
        }
    }
}

fn units_to_nj(units: u128) -> f64 {
    units as f64 / UNITS_PER_NJ as f64
}

/// One configuration normalized against the baseline in [`compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRow {
    pub label: String,
    pub energy_ratio: f64,
    pub latency_ratio: f64,
    pub energy_reduction_pct: f64,
    pub latency_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompareError {
    BaselineIndexOutOfRange { index: usize, len: usize },
    /// The baseline has zero total energy or latency, so ratios are undefined.
    ZeroBaseline,
}

impl fmt::Display for CompareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareError::BaselineIndexOutOfRange { index, len } => {
                write!(f, "baseline index {index} out of range for {len} reports")
            }
            CompareError::ZeroBaseline => {
                write!(f, "baseline report has zero total energy or latency")
            }
        }
    }
}

impl core::error::Error for CompareError {}

/// Normalizes every non-baseline report against the baseline entry. Emits
/// one row per compared configuration, in input order.
pub fn compare(
    entries: &[(&str, EnergyReport)],
    baseline: usize,
) -> Result<Vec<NormalizedRow>, CompareError> {
    let (_, base) = entries
        .get(baseline)
        .ok_or(CompareError::BaselineIndexOutOfRange {
            index: baseline,
            len: entries.len(),
        })?;
    let base_energy = base.total_units();
    let base_latency = base.total_latency_cycles();
    if base_energy == 0 || base_latency == 0 {
        return Err(CompareError::ZeroBaseline);
    }
    let mut rows = Vec::new();
    for (i, (label, report)) in entries.iter().enumerate() {
        if i == baseline {
            continue;
        }
        let energy_ratio = report.total_units() as f64 / base_energy as f64;
        let latency_ratio = report.total_latency_cycles() as f64 / base_latency as f64;
        rows.push(NormalizedRow {
            label: String::from(*label),
            energy_ratio,
            latency_ratio,
            energy_reduction_pct: (1.0 - energy_ratio) * 100.0,
            latency_reduction_pct: (1.0 - latency_ratio) * 100.0,
        });
    }
    Ok(rows)
}
