//! The simulation loop: replays a trace against the cache, drives the
//! prefetcher off each access outcome, applies NST throttling when enabled,
//! and keeps the counters and energy ledger consistent with every fill,
//! eviction, and expiration the cache reports.
//!
//! Timing model: the trace supplies demand cycles; fills complete
//! `memory_latency` cycles after issue and are applied lazily the next time
//! the cache is touched. Retention-mode switches charge their flat overhead
//! to the ledger but do not shift trace timestamps. At the end of a run,
//! outstanding fills are completed at their natural cycles, a final
//! expiration sweep runs, and prefetched blocks never demanded are counted
//! as unused; dirty blocks still resident are not flushed.

use crate::cache::{
    AccessResult, Cache, CacheError, CacheGeometry, Expiration, FillOrigin, FillReport, MissClass,
    Outcome, PrefetchIssue,
};
use crate::metrics::{CounterSet, EnergyEvent, EnergyLedger, EnergyReport, RetentionConfig};
use crate::prefetch::{NstConfig, NstState, PrefetchConfig, StridePrefetcher};
use crate::trace::{AccessKind, TraceEvent, TraceSource};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub geometry: CacheGeometry,
    pub retention: RetentionConfig,
    pub mshr_capacity: usize,
    pub memory_latency: u64,
    /// `None` disables prefetching.
    pub prefetch: Option<PrefetchConfig>,
}

impl SimConfig {
    pub fn new(geometry: CacheGeometry, retention: RetentionConfig) -> Self {
        SimConfig {
            geometry,
            retention,
            mshr_capacity: 8,
            memory_latency: 100,
            prefetch: None,
        }
    }

    pub fn with_prefetch(mut self, prefetch: PrefetchConfig) -> Self {
        self.prefetch = Some(prefetch);
        self
    }

    pub fn with_memory_latency(mut self, memory_latency: u64) -> Self {
        self.memory_latency = memory_latency;
        self
    }

    pub fn with_mshr_capacity(mut self, mshr_capacity: usize) -> Self {
        self.mshr_capacity = mshr_capacity;
        self
    }
}

/// Final state of one simulation.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub counters: CounterSet,
    pub report: EnergyReport,
    /// Cycle at which the run closed (last event or last outstanding fill).
    pub end_cycle: u64,
}

pub struct Simulator {
    cache: Cache,
    prefetcher: StridePrefetcher,
    prefetch_enabled: bool,
    nst: Option<NstState>,
    ledger: EnergyLedger,
    counters: CounterSet,
    now: u64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        let prefetch_enabled = config.prefetch.is_some();
        let prefetch_config = config
            .prefetch
            .unwrap_or(PrefetchConfig {
                degree: 1,
                distance: 1,
                trigger_on_expiration_miss: true,
            });
        let ledger = EnergyLedger::new(&config.retention);
        let prefetcher = StridePrefetcher::new(config.geometry.block_size, prefetch_config);
        Simulator {
            cache: Cache::new(
                config.geometry,
                config.retention,
                config.mshr_capacity,
                config.memory_latency,
            ),
            prefetcher,
            prefetch_enabled,
            nst: None,
            ledger,
            counters: CounterSet::default(),
            now: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn counters(&self) -> CounterSet {
        self.counters
    }

    pub fn retention(&self) -> &RetentionConfig {
        self.cache.retention()
    }

    pub fn prefetch_config(&self) -> PrefetchConfig {
        self.prefetcher.config()
    }

    pub fn set_prefetch_enabled(&mut self, enabled: bool) {
        self.prefetch_enabled = enabled;
    }

    /// Swaps degree/distance/trigger without losing trained streams.
    pub fn configure_prefetch(&mut self, config: PrefetchConfig) {
        self.prefetcher.set_degree(config.degree);
        self.prefetcher.set_distance(config.distance);
        self.prefetcher
            .set_trigger_on_expiration_miss(config.trigger_on_expiration_miss);
    }

    /// Turns on NST throttling: distance drops to 1 and adapts per window.
    pub fn enable_nst(&mut self, config: NstConfig) {
        let nst = NstState::new(config);
        self.prefetcher.set_distance(nst.current_distance);
        self.nst = Some(nst);
    }

    pub fn nst_distance(&self) -> Option<u32> {
        self.nst.as_ref().map(|n| n.current_distance)
    }

    /// Mid-run energy/latency totals, with leakage settled up to `now`.
    pub fn report(&mut self) -> EnergyReport {
        self.ledger.advance_to(self.now);
        self.ledger.report()
    }

    /// Switches the retention configuration at the current cycle, charging
    /// the flat migration overhead.
    pub fn switch_retention(&mut self, new: RetentionConfig) -> Result<u64, CacheError> {
        let migration = self.cache.switch_retention(new.clone(), self.now)?;
        self.absorb_expirations(&migration.expirations);
        self.ledger.record_migration();
        self.ledger.set_config(&new, self.now);
        Ok(migration.migrated_blocks)
    }

    /// Replays one demand access.
    pub fn step(&mut self, event: &TraceEvent) -> AccessResult {
        debug_assert!(event.cycle >= self.now, "trace cycles must not regress");
        self.now = event.cycle;
        self.ledger.advance_to(self.now);

        let result = self.cache.access(event, self.now);
        self.absorb_fills(&result.fills);
        self.absorb_expirations(&result.expirations_observed);

        self.counters.demand_accesses += 1;
        match result.outcome {
            Outcome::Hit => {
                self.counters.demand_hits += 1;
                if result.hit_was_prefetched {
                    self.counters.timely_prefetches += 1;
                }
                self.ledger.record(if event.kind == AccessKind::Write {
                    EnergyEvent::WriteHit
                } else {
                    EnergyEvent::ReadHit
                });
            }
            Outcome::Miss => {
                self.counters.demand_misses += 1;
                if result.miss_class == Some(MissClass::Expiration) {
                    self.counters.expiration_misses += 1;
                }
                if result.merged_into_prefetch {
                    self.counters.late_prefetches += 1;
                    if let Some(nst) = &mut self.nst {
                        nst.record_late_prefetch();
                    }
                }
                if result.mshr_allocated {
                    self.counters.total_mshr_requests += 1;
                }
            }
        }
        self.ledger.add_demand_latency(result.latency_cycles);

        if self.prefetch_enabled {
            for request in self.prefetcher.observe(event, &result) {
                if self.cache.issue_prefetch(request.block_addr, self.now) == PrefetchIssue::Issued
                {
                    self.counters.total_prefetches += 1;
                    self.counters.total_mshr_requests += 1;
                    if let Some(nst) = &mut self.nst {
                        nst.record_prefetch();
                    }
                }
            }
        }
        if let Some(nst) = &mut self.nst {
            if let Some(distance) = nst.on_demand_access() {
                self.prefetcher.set_distance(distance);
            }
        }
        result
    }

    /// Runs up to `events` events from `source`; returns how many ran.
    pub fn run_window(&mut self, source: &mut dyn TraceSource, events: u64) -> u64 {
        let mut consumed = 0;
        while consumed < events {
            let Some(event) = source.next() else { break };
            self.step(&event);
            consumed += 1;
        }
        consumed
    }

    /// Runs the source dry; returns how many events ran.
    pub fn run_all(&mut self, source: &mut dyn TraceSource) -> u64 {
        let mut consumed = 0;
        for event in source {
            self.step(&event);
            consumed += 1;
        }
        consumed
    }

    /// Sweeps expirations due at the current cycle so counters read at a
    /// window boundary attribute every decayed block.
    pub fn drain(&mut self) {
        let fills = self.cache.pump(self.now);
        self.absorb_fills(&fills);
        let expirations = self.cache.drain_expired(self.now);
        self.absorb_expirations(&expirations);
    }

    /// Closes the run: completes outstanding fills, runs a final sweep, and
    /// counts never-demanded prefetched blocks as unused.
    pub fn finish(mut self) -> RunOutput {
        let end = self.cache.mshr().max_ready().map_or(self.now, |r| r.max(self.now));
        let fills = self.cache.pump(end);
        self.absorb_fills(&fills);
        let expirations = self.cache.drain_expired(end);
        self.absorb_expirations(&expirations);
        self.counters.unused_prefetches += self.cache.count_live_prefetched();
        self.ledger.advance_to(end);
        RunOutput {
            counters: self.counters,
            report: self.ledger.report(),
            end_cycle: end,
        }
    }

    fn absorb_fills(&mut self, fills: &[FillReport]) {
        for fill in fills {
            self.counters.fills += 1;
            self.ledger.record(EnergyEvent::Fill);
            if fill.origin == FillOrigin::Prefetch && fill.reloaded_expired {
                self.counters.prefetchable_expired_reloads += 1;
            }
            if let Some(evicted) = fill.evicted {
                self.counters.evictions += 1;
                if evicted.dirty {
                    self.counters.writebacks += 1;
                    self.ledger.record(EnergyEvent::Writeback);
                }
                if evicted.unused_prefetch {
                    self.counters.unused_prefetches += 1;
                }
            }
            self.absorb_expirations(&fill.expirations);
        }
    }

    fn absorb_expirations(&mut self, expirations: &[Expiration]) {
        for expiration in expirations {
            self.counters.expirations += 1;
            if expiration.was_unused_prefetch {
                self.counters.expired_unused_prefetches += 1;
                self.counters.unused_prefetches += 1;
            }
            if expiration.was_dirty {
                self.counters.writebacks += 1;
                self.ledger.record(EnergyEvent::Writeback);
            }
        }
    }

    /// Structural cache self-check, for tests.
    pub fn validate_cache(&self) -> Result<(), &'static str> {
        self.cache.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{gen_strided, StridedSpec, VecTrace};
    use alloc::vec;
    use alloc::vec::Vec;

    const CLOCK: u64 = 2_000_000_000;

    fn stride_trace(count: u64, inter: u64) -> VecTrace {
        gen_strided(&StridedSpec {
            pc: 0x400,
            base: 0,
            stride: 64,
            count,
            start_cycle: 0,
            inter_arrival: inter,
            kind: AccessKind::Read,
        })
        .unwrap()
    }

    fn sim_25us(prefetch: Option<PrefetchConfig>) -> Simulator {
        let mut cfg = SimConfig::new(CacheGeometry::l1_32k(), RetentionConfig::stt_25us(CLOCK));
        cfg.prefetch = prefetch;
        Simulator::new(cfg)
    }

    #[test]
    fn steady_state_stride_stream_stops_missing() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(4, 16, true).unwrap()));
        // Inter-arrival above memory latency: fills land before the next
        // demand, so the MSHR never saturates and the prefetcher runs ahead.
        let mut trace = stride_trace(500, 120);
        for _ in 0..100 {
            let ev = trace.next().unwrap();
            sim.step(&ev);
        }
        let warm = sim.counters();
        for ev in trace {
            sim.step(&ev);
        }
        let tail = sim.counters().since(&warm);
        assert_eq!(tail.demand_misses, 0);
        assert_eq!(tail.demand_hits, 400);
        sim.validate_cache().unwrap();
    }

    #[test]
    fn conservation_after_finish() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(4, 16, true).unwrap()));
        let mut trace = stride_trace(400, 10);
        sim.run_all(&mut trace);
        let out = sim.finish();
        let c = out.counters;
        assert_eq!(c.demand_accesses, 400);
        assert_eq!(c.demand_hits + c.demand_misses, c.demand_accesses);
        // Every MSHR allocation eventually filled.
        assert_eq!(c.fills, c.total_mshr_requests);
        // Every prefetch is exactly one of timely, late, or unused.
        assert_eq!(
            c.timely_prefetches + c.late_prefetches + c.unused_prefetches,
            c.total_prefetches
        );
    }

    #[test]
    fn without_prefetch_no_prefetch_counters_move() {
        let mut sim = sim_25us(None);
        let mut trace = stride_trace(300, 10);
        sim.run_all(&mut trace);
        let out = sim.finish();
        assert_eq!(out.counters.total_prefetches, 0);
        assert_eq!(out.counters.late_prefetches, 0);
        assert_eq!(out.counters.total_mshr_requests, out.counters.demand_misses);
    }

    #[test]
    fn energy_accounting_of_a_tiny_trace() {
        // read A (cold miss), read A (hit), write A (write hit), at 25 µs.
        let events = vec![
            TraceEvent { cycle: 0, pc: 1, address: 0x1000, kind: AccessKind::Read },
            TraceEvent { cycle: 200, pc: 1, address: 0x1000, kind: AccessKind::Read },
            TraceEvent { cycle: 300, pc: 1, address: 0x1000, kind: AccessKind::Write },
        ];
        let mut trace = VecTrace::new(events).unwrap();
        let mut sim = sim_25us(None);
        sim.run_all(&mut trace);
        let out = sim.finish();
        // fill 60_000 + read hit 50_000 + write hit (50_000 + 60_000)
        assert_eq!(out.report.dynamic_units, 220_000);
        assert_eq!(out.report.leakage_units, 300 * 58_890u128);
        assert_eq!(out.report.demand_latency_cycles, 100 + 1 + 2);
        assert_eq!(out.end_cycle, 300);
        // Dirty block still live at the end: no write-back charged.
        assert_eq!(out.counters.writebacks, 0);
    }

    #[test]
    fn in_flight_fill_at_end_extends_the_run() {
        let events = vec![TraceEvent {
            cycle: 50,
            pc: 1,
            address: 0x40,
            kind: AccessKind::Read,
        }];
        let mut trace = VecTrace::new(events).unwrap();
        let mut sim = sim_25us(None);
        sim.run_all(&mut trace);
        let out = sim.finish();
        assert_eq!(out.end_cycle, 150); // fill completes at 50 + 100
        assert_eq!(out.counters.fills, 1);
        assert_eq!(out.report.leakage_units, 150 * 58_890u128);
    }

    #[test]
    fn unused_prefetches_counted_at_finish() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(4, 16, true).unwrap()));
        // Train a sparse stream, then stop: the frontier runs 16 blocks past
        // the last demand, and everything it fetched out there goes unused.
        let mut trace = stride_trace(10, 200);
        sim.run_all(&mut trace);
        let out = sim.finish();
        // Triggers at blocks 2..=9: bursts of 4 until the frontier hits the
        // distance cap, then one per hit. Blocks 3..=9 are demanded in time.
        assert_eq!(out.counters.total_prefetches, 23);
        assert_eq!(out.counters.timely_prefetches, 7);
        assert_eq!(out.counters.late_prefetches, 0);
        assert_eq!(out.counters.unused_prefetches, 16);
    }

    #[test]
    fn expired_unused_prefetch_is_counted_once() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(1, 1, true).unwrap()));
        // Three accesses train and trigger one prefetch (block 3); nothing
        // ever demands it, and the run extends past its expiry.
        let events = vec![
            TraceEvent { cycle: 0, pc: 1, address: 0, kind: AccessKind::Read },
            TraceEvent { cycle: 10, pc: 1, address: 64, kind: AccessKind::Read },
            TraceEvent { cycle: 20, pc: 1, address: 128, kind: AccessKind::Read },
            // Unrelated access far in the future forces the expiry sweep.
            TraceEvent { cycle: 200_000, pc: 2, address: 1 << 20, kind: AccessKind::Read },
        ];
        let mut trace = VecTrace::new(events).unwrap();
        sim.run_all(&mut trace);
        let out = sim.finish();
        assert_eq!(out.counters.total_prefetches, 1);
        assert_eq!(out.counters.expired_unused_prefetches, 1);
        assert_eq!(out.counters.unused_prefetches, 1);
        assert_eq!(out.counters.expirations, 4); // blocks 0,1,2 and the prefetched 3
    }

    #[test]
    fn late_prefetch_merge_is_counted_and_cheaper() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(1, 1, true).unwrap()));
        // Stride with inter-arrival below memory latency: block 3's prefetch
        // issues at cycle 20 (ready 120) and the demand merges into it at 30.
        // That merge is itself a trigger, so block 4 is fetched and unused.
        let mut trace = stride_trace(4, 10);
        sim.run_all(&mut trace);
        let out = sim.finish();
        assert_eq!(out.counters.late_prefetches, 1);
        assert_eq!(out.counters.unused_prefetches, 1);
        assert_eq!(out.counters.total_prefetches, 2);
    }

    #[test]
    fn nst_adapts_distance_during_a_run() {
        let mut cfg = SimConfig::new(CacheGeometry::l1_32k(), RetentionConfig::stt_25us(CLOCK));
        cfg.prefetch = Some(PrefetchConfig::new(4, 1, true).unwrap());
        let mut sim = Simulator::new(cfg);
        sim.enable_nst(NstConfig {
            window_demand_accesses: 64,
            ..NstConfig::default()
        });
        assert_eq!(sim.nst_distance(), Some(1));
        // Dense stream: at distance 1 every prefetch is late, so NST raises.
        let mut trace = stride_trace(400, 5);
        sim.run_all(&mut trace);
        assert!(sim.nst_distance().unwrap() > 1);
        assert!(sim.prefetch_config().distance > 1);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut sim = sim_25us(Some(PrefetchConfig::new(4, 8, true).unwrap()));
            let mut trace = stride_trace(300, 7);
            sim.run_all(&mut trace);
            sim.finish()
        };
        let a = run();
        let b = run();
        assert_eq!(a.counters, b.counters);
        assert_eq!(a.report, b.report);
        assert_eq!(a.end_cycle, b.end_cycle);
    }

    #[test]
    fn switch_retention_charges_migration_and_retimes() {
        let mut sim = sim_25us(None);
        let mut trace = stride_trace(4, 10);
        sim.run_all(&mut trace);
        sim.drain();
        let migrated = sim
            .switch_retention(RetentionConfig::stt_1ms(CLOCK))
            .unwrap();
        assert!(migrated <= 4); // whatever had filled by cycle 30
        let report = sim.report();
        assert_eq!(report.migration_cycles, 2560);
        assert_eq!(report.migration_units, 81_920_000u128);
        let err = sim
            .switch_retention(RetentionConfig::stt_1ms(CLOCK))
            .unwrap_err();
        assert_eq!(err, CacheError::SameConfiguration);
    }

    #[test]
    fn run_window_consumes_exactly_its_budget() {
        let mut sim = sim_25us(None);
        let mut trace = stride_trace(100, 10);
        assert_eq!(sim.run_window(&mut trace, 30), 30);
        assert_eq!(sim.counters().demand_accesses, 30);
        assert_eq!(sim.run_window(&mut trace, 200), 70); // source runs dry
    }

    #[test]
    fn prefetched_hits_count_timely() {
        let mut sim = sim_25us(Some(PrefetchConfig::new(4, 16, true).unwrap()));
        let mut trace = stride_trace(200, 20); // slow enough to be timely
        sim.run_all(&mut trace);
        let out = sim.finish();
        assert!(out.counters.timely_prefetches > 100);
    }

    #[test]
    fn write_stream_dirties_blocks_and_writes_back_on_expiry() {
        let spec = StridedSpec {
            pc: 0x400,
            base: 0,
            stride: 64,
            count: 8,
            start_cycle: 0,
            inter_arrival: 10,
            kind: AccessKind::Write,
        };
        let mut trace = gen_strided(&spec).unwrap();
        let mut sim = sim_25us(None);
        sim.run_all(&mut trace);
        // Let everything expire, then sweep.
        let far = TraceEvent {
            cycle: 200_000,
            pc: 9,
            address: 1 << 20,
            kind: AccessKind::Read,
        };
        sim.step(&far);
        let out = sim.finish();
        assert_eq!(out.counters.expirations, 8);
        assert_eq!(out.counters.writebacks, 8);
    }

    #[test]
    fn collected_outcomes_form_expected_sequence() {
        // Miss, hit, expiration-miss for one block.
        let events = vec![
            TraceEvent { cycle: 0, pc: 1, address: 0x40, kind: AccessKind::Read },
            TraceEvent { cycle: 1_000, pc: 1, address: 0x40, kind: AccessKind::Read },
            TraceEvent { cycle: 60_000, pc: 1, address: 0x40, kind: AccessKind::Read },
        ];
        let mut sim = sim_25us(None);
        let mut seq = Vec::new();
        for ev in VecTrace::new(events).unwrap() {
            let r = sim.step(&ev);
            seq.push((r.outcome, r.miss_class));
        }
        assert_eq!(
            seq,
            vec![
                (Outcome::Miss, Some(MissClass::NonExpiration)),
                (Outcome::Hit, None),
                (Outcome::Miss, Some(MissClass::Expiration)),
            ]
        );
    }
}
