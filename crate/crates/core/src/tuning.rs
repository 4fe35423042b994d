//! Retention-time tuning and end-to-end policy runs.
//!
//! The tuner samples the workload once per retention candidate, longest
//! first, with the prefetcher throttled to degree 1 / distance 1 so the
//! expired-prefetch signal reflects block lifetimes rather than prefetcher
//! aggressiveness. Each window yields two ratios:
//!
//! - `allPF`   = prefetches / all MSHR requests — is there enough prefetch
//!   traffic to trust the signal at all?
//! - `expiredPF` = expired-unused prefetches / prefetches — are prefetched
//!   blocks decaying before they are used?
//!
//! [`PartController`] replays the decision procedure over those ratios: keep
//! shortening retention while `expiredPF` stays under twice the first
//! meaningful baseline, stop at the previous candidate when it doubles, and
//! fall back to plain miss-rate tuning when `allPF` is too thin to mean
//! anything. The chosen retention then maps to a prefetch distance through
//! the expired-ratio/distance table ([`rpc_distance`]): the more prefetched
//! blocks decay, the closer the prefetcher must stay to the demand front.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::cache::{CacheError, CacheGeometry};
use crate::metrics::RetentionConfig;
use crate::prefetch::{NstConfig, PrefetchConfig, PrefetchConfigError};
use crate::sim::{RunOutput, SimConfig, Simulator};
use crate::trace::TraceSource;

/// Decision thresholds for the expired-prefetch walk.
#[derive(Debug, Clone, PartialEq)]
pub struct PartThresholds {
    /// Minimum `allPF` for the expired-prefetch signal to be trusted (0.1%).
    pub min_all_pf: f64,
    /// `expiredPF` must exceed this before it is adopted as the baseline
    /// the growth check compares against (0.02%).
    pub min_expired_pf_for_base: f64,
    /// Stop once `expiredPF` reaches this multiple of the baseline.
    pub growth_factor: f64,
    /// Demand accesses sampled per retention candidate.
    pub window_events: u64,
}

impl Default for PartThresholds {
    fn default() -> Self {
        PartThresholds {
            min_all_pf: 0.001,
            min_expired_pf_for_base: 0.0002,
            growth_factor: 2.0,
            window_events: 100_000,
        }
    }
}

/// Retention candidates ordered longest to shortest.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionSet {
    configs: Vec<RetentionConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetentionSetError {
    Empty,
    /// Candidates must be strictly decreasing in retention cycles.
    NotStrictlyDecreasing,
}

impl fmt::Display for RetentionSetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetentionSetError::Empty => write!(f, "retention set is empty"),
            RetentionSetError::NotStrictlyDecreasing => {
                write!(f, "retention set must be ordered longest to shortest")
            }
        }
    }
}

impl core::error::Error for RetentionSetError {}

impl RetentionSet {
    pub fn new(configs: Vec<RetentionConfig>) -> Result<Self, RetentionSetError> {
        if configs.is_empty() {
            return Err(RetentionSetError::Empty);
        }
        for pair in configs.windows(2) {
            if pair[1].retention_cycles >= pair[0].retention_cycles {
                return Err(RetentionSetError::NotStrictlyDecreasing);
            }
        }
        Ok(RetentionSet { configs })
    }

    /// The five STTRAM candidates: 1 ms, 100 µs, 75 µs, 50 µs, 25 µs.
    pub fn standard(clock_hz: u64) -> Self {
        RetentionSet {
            configs: alloc::vec![
                RetentionConfig::stt_1ms(clock_hz),
                RetentionConfig::stt_100us(clock_hz),
                RetentionConfig::stt_75us(clock_hz),
                RetentionConfig::stt_50us(clock_hz),
                RetentionConfig::stt_25us(clock_hz),
            ],
        }
    }

    pub fn configs(&self) -> &[RetentionConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn longest(&self) -> &RetentionConfig {
        &self.configs[0]
    }

    pub fn shortest(&self) -> &RetentionConfig {
        &self.configs[self.configs.len() - 1]
    }
}

/// Maps a window's expired-prefetch ratio to the prefetch distance used
/// after tuning. Boundary values belong to the larger-ratio bucket down to
/// 0.05%, which is inclusive on both ends of its range.
pub fn rpc_distance(expired_pf: f64) -> u32 {
    if expired_pf > 0.05 {
        1
    } else if expired_pf > 0.01 {
        4
    } else if expired_pf > 0.005 {
        8
    } else if expired_pf >= 0.0005 {
        16
    } else {
        32
    }
}

/// What the controller wants after seeing one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartStep {
    /// Sample the next (shorter) retention.
    Continue,
    /// Walk finished; use this candidate index.
    Done { retention_idx: usize },
    /// Prefetch traffic too thin; switch to miss-rate tuning.
    FallBack,
}

/// The retention-walk decision procedure, lifted out of the simulator so it
/// is a pure function of the per-window `(allPF, expiredPF)` sequence.
#[derive(Debug, Clone)]
pub struct PartController {
    candidates: usize,
    min_all_pf: f64,
    min_expired_pf_for_base: f64,
    growth_factor: f64,
    visited: usize,
    output: usize,
    base_expired_pf: Option<f64>,
}

impl PartController {
    pub fn new(candidates: usize, thresholds: &PartThresholds) -> Self {
        debug_assert!(candidates >= 1);
        PartController {
            candidates,
            min_all_pf: thresholds.min_all_pf,
            min_expired_pf_for_base: thresholds.min_expired_pf_for_base,
            growth_factor: thresholds.growth_factor,
            visited: 0,
            output: 0,
            base_expired_pf: None,
        }
    }

    /// Feeds the ratios measured at the next candidate (longest first).
    pub fn observe(&mut self, all_pf: f64, expired_pf: f64) -> PartStep {
        debug_assert!(self.visited < self.candidates, "walk already finished");
        let i = self.visited;
        self.visited += 1;
        let last = self.visited == self.candidates;

        if all_pf > self.min_all_pf {
            if let Some(base) = self.base_expired_pf {
                if expired_pf < self.growth_factor * base {
                    self.output = i;
                } else {
                    // Expired prefetches took off: keep the previous winner.
                    return PartStep::Done {
                        retention_idx: self.output,
                    };
                }
            } else {
                self.output = i;
                if expired_pf > self.min_expired_pf_for_base {
                    self.base_expired_pf = Some(expired_pf);
                }
            }
            if last {
                PartStep::Done {
                    retention_idx: self.output,
                }
            } else {
                PartStep::Continue
            }
        } else {
            self.output = i;
            PartStep::FallBack
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMode {
    /// Decided by the expired-prefetch walk.
    ExpiredPf,
    /// Decided by miss rates (fallback or the miss-based policies).
    MissBased,
}

/// Ratios measured in one sampling window, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub retention_label: String,
    pub all_pf: f64,
    pub expired_pf: f64,
    pub miss_rate: f64,
    pub phase: TuningMode,
}

/// Outcome of the tuning phase.
#[derive(Debug, Clone)]
pub struct TuningDecision {
    pub retention: RetentionConfig,
    pub distance: u32,
    pub mode: TuningMode,
    pub samples: Vec<WindowSample>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TuneError {
    /// The trace ran out before a sampling window completed.
    TraceExhausted { consumed: u64, needed: u64 },
    InvalidPrefetch(PrefetchConfigError),
    Cache(CacheError),
}

impl fmt::Display for TuneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuneError::TraceExhausted { consumed, needed } => write!(
                f,
                "trace exhausted during tuning: needed a window of {needed} events, got {consumed}"
            ),
            TuneError::InvalidPrefetch(e) => write!(f, "invalid prefetch configuration: {e}"),
            TuneError::Cache(e) => write!(f, "cache error during tuning: {e}"),
        }
    }
}

impl core::error::Error for TuneError {}

impl From<CacheError> for TuneError {
    fn from(e: CacheError) -> Self {
        TuneError::Cache(e)
    }
}

impl From<PrefetchConfigError> for TuneError {
    fn from(e: PrefetchConfigError) -> Self {
        TuneError::InvalidPrefetch(e)
    }
}

fn consume_window(
    sim: &mut Simulator,
    source: &mut dyn TraceSource,
    events: u64,
) -> Result<(), TuneError> {
    let consumed = sim.run_window(source, events);
    if consumed < events {
        return Err(TuneError::TraceExhausted {
            consumed,
            needed: events,
        });
    }
    sim.drain();
    Ok(())
}

fn settle(
    sim: &mut Simulator,
    configs: &[RetentionConfig],
    idx: usize,
) -> Result<(), TuneError> {
    if sim.retention() != &configs[idx] {
        sim.switch_retention(configs[idx].clone())?;
    }
    Ok(())
}

/// Samples each retention candidate and picks one by the expired-prefetch
/// walk, falling back to [`miss_based_tune`] when prefetch traffic is too
/// thin. The simulator keeps its cache contents across the walk; every
/// retention switch (including the settling switch when the decision is not
/// the last candidate sampled) charges migration overhead.
pub fn part_tune(
    sim: &mut Simulator,
    source: &mut dyn TraceSource,
    set: &RetentionSet,
    thresholds: &PartThresholds,
    miss_tolerance: f64,
) -> Result<TuningDecision, TuneError> {
    let configs = set.configs();
    sim.set_prefetch_enabled(true);
    let trigger = sim.prefetch_config().trigger_on_expiration_miss;
    sim.configure_prefetch(PrefetchConfig {
        degree: 1,
        distance: 1,
        trigger_on_expiration_miss: trigger,
    });
    settle(sim, configs, 0)?;

    let mut controller = PartController::new(configs.len(), thresholds);
    let mut samples: Vec<WindowSample> = Vec::new();
    let mut snapshot = sim.counters();
    for (i, config) in configs.iter().enumerate() {
        if i > 0 {
            sim.switch_retention(config.clone())?;
        }
        consume_window(sim, source, thresholds.window_events)?;
        let window = sim.counters().since(&snapshot);
        snapshot = sim.counters();
        let (all_pf, expired_pf) = window.ratios();
        samples.push(WindowSample {
            retention_label: config.label.clone(),
            all_pf,
            expired_pf,
            miss_rate: window.miss_rate(),
            phase: TuningMode::ExpiredPf,
        });
        match controller.observe(all_pf, expired_pf) {
            PartStep::Continue => {}
            PartStep::Done { retention_idx } => {
                settle(sim, configs, retention_idx)?;
                let distance = rpc_distance(samples[retention_idx].expired_pf);
                return Ok(TuningDecision {
                    retention: configs[retention_idx].clone(),
                    distance,
                    mode: TuningMode::ExpiredPf,
                    samples,
                });
            }
            PartStep::FallBack => {
                // Too little prefetch traffic to read the signal; the
                // distance still comes from this window's expired ratio.
                let fallback_expired_pf = samples[i].expired_pf;
                let (idx, mb_samples) =
                    miss_based_tune(sim, source, set, miss_tolerance, thresholds.window_events)?;
                samples.extend(mb_samples);
                settle(sim, configs, idx)?;
                return Ok(TuningDecision {
                    retention: configs[idx].clone(),
                    distance: rpc_distance(fallback_expired_pf),
                    mode: TuningMode::MissBased,
                    samples,
                });
            }
        }
    }
    unreachable!("the walk terminates at the last candidate")
}

/// Samples every candidate with prefetching disabled and picks the shortest
/// retention whose miss rate stays within `1 + tolerance` of the longest
/// candidate's. Leaves the prefetcher disabled; callers re-enable it for
/// the main phase. Returns the chosen index without settling the simulator.
pub fn miss_based_tune(
    sim: &mut Simulator,
    source: &mut dyn TraceSource,
    set: &RetentionSet,
    tolerance: f64,
    window_events: u64,
) -> Result<(usize, Vec<WindowSample>), TuneError> {
    let configs = set.configs();
    sim.set_prefetch_enabled(false);
    settle(sim, configs, 0)?;
    let mut samples = Vec::new();
    let mut snapshot = sim.counters();
    for (i, config) in configs.iter().enumerate() {
        if i > 0 {
            sim.switch_retention(config.clone())?;
        }
        consume_window(sim, source, window_events)?;
        let window = sim.counters().since(&snapshot);
        snapshot = sim.counters();
        samples.push(WindowSample {
            retention_label: config.label.clone(),
            all_pf: window.all_pf(),
            expired_pf: window.expired_pf(),
            miss_rate: window.miss_rate(),
            phase: TuningMode::MissBased,
        });
    }
    let rates: Vec<f64> = samples.iter().map(|s| s.miss_rate).collect();
    Ok((pick_miss_based(&rates, tolerance), samples))
}

/// Index of the shortest retention whose miss rate is within
/// `1 + tolerance` of the longest candidate's (index 0).
pub fn pick_miss_based(miss_rates: &[f64], tolerance: f64) -> usize {
    debug_assert!(!miss_rates.is_empty());
    let bound = miss_rates[0] * (1.0 + tolerance);
    (0..miss_rates.len())
        .rev()
        .find(|&i| miss_rates[i] <= bound)
        .unwrap_or(0)
}

/// The cache-management policies under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Miss-rate retention tuning, no prefetching.
    Lars,
    /// Miss-rate retention tuning plus prefetching at a fixed distance.
    LarsPfd(u32),
    /// Miss-rate retention tuning plus NST-throttled prefetching.
    LarsNst,
    /// Expired-prefetch retention tuning plus ratio-mapped distance.
    PartRpc,
    /// Expired-prefetch retention tuning plus NST-throttled prefetching.
    PartNst,
    /// Conventional SRAM cache plus NST-throttled prefetching.
    SramNst,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Lars => write!(f, "LARS"),
            Policy::LarsPfd(n) => write!(f, "LARS+PFD_{n}"),
            Policy::LarsNst => write!(f, "LARS+NST"),
            Policy::PartRpc => write!(f, "PART+RPC"),
            Policy::PartNst => write!(f, "PART+NST"),
            Policy::SramNst => write!(f, "SRAM+NST"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyParseError(pub String);

impl fmt::Display for PolicyParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown policy '{}'", self.0)
    }
}

impl core::error::Error for PolicyParseError {}

impl FromStr for Policy {
    type Err = PolicyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LARS" => Ok(Policy::Lars),
            "LARS+NST" => Ok(Policy::LarsNst),
            "PART+RPC" => Ok(Policy::PartRpc),
            "PART+NST" => Ok(Policy::PartNst),
            "SRAM+NST" => Ok(Policy::SramNst),
            other => other
                .strip_prefix("LARS+PFD_")
                .and_then(|n| n.parse().ok())
                .map(Policy::LarsPfd)
                .ok_or_else(|| PolicyParseError(String::from(s))),
        }
    }
}

/// Everything a policy run needs besides the trace.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub geometry: CacheGeometry,
    pub retention_set: RetentionSet,
    pub sram: RetentionConfig,
    pub thresholds: PartThresholds,
    /// Miss-rate slack for miss-based tuning (0.05 = within 5%).
    pub miss_tolerance: f64,
    /// Prefetch degree of the main phase (sampling always uses degree 1).
    pub degree: u32,
    pub trigger_on_expiration_miss: bool,
    pub nst: NstConfig,
    pub mshr_capacity: usize,
    pub memory_latency: u64,
}

impl PolicyParams {
    pub fn standard(clock_hz: u64) -> Self {
        PolicyParams {
            geometry: CacheGeometry::l1_32k(),
            retention_set: RetentionSet::standard(clock_hz),
            sram: RetentionConfig::sram(clock_hz),
            thresholds: PartThresholds::default(),
            miss_tolerance: 0.05,
            degree: 4,
            trigger_on_expiration_miss: true,
            nst: NstConfig::default(),
            mshr_capacity: 8,
            memory_latency: 100,
        }
    }
}

/// Result of running one policy over one trace.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: Policy,
    /// Retention configuration of the main phase.
    pub retention_label: String,
    /// Prefetch distance of the main phase; `None` when prefetching is off;
    /// for NST policies, the distance in effect when the run ended.
    pub distance: Option<u32>,
    pub tuning_mode: Option<TuningMode>,
    pub counters: crate::metrics::CounterSet,
    pub report: crate::metrics::EnergyReport,
    pub samples: Vec<WindowSample>,
    pub end_cycle: u64,
}

fn build_sim(
    params: &PolicyParams,
    retention: RetentionConfig,
    prefetch: Option<PrefetchConfig>,
) -> Simulator {
    let mut config = SimConfig::new(params.geometry, retention);
    config.mshr_capacity = params.mshr_capacity;
    config.memory_latency = params.memory_latency;
    config.prefetch = prefetch;
    Simulator::new(config)
}

fn main_prefetch(params: &PolicyParams, distance: u32) -> Result<PrefetchConfig, TuneError> {
    Ok(PrefetchConfig::new(
        params.degree,
        distance,
        params.trigger_on_expiration_miss,
    )?)
}

/// Runs one policy over the whole trace: tuning phase (where the policy has
/// one), then the main phase on the remaining events.
pub fn run_policy(
    source: &mut dyn TraceSource,
    policy: Policy,
    params: &PolicyParams,
) -> Result<PolicyRun, TuneError> {
    match policy {
        Policy::SramNst => {
            let prefetch = main_prefetch(params, 1)?;
            let mut sim = build_sim(params, params.sram.clone(), Some(prefetch));
            sim.enable_nst(params.nst);
            sim.run_all(source);
            let distance = sim.nst_distance();
            let out = sim.finish();
            Ok(finish_run(policy, String::from("SRAM"), distance, None, Vec::new(), out))
        }
        Policy::Lars => {
            let mut sim = build_sim(params, params.retention_set.longest().clone(), None);
            let (idx, samples) = miss_based_tune(
                &mut sim,
                source,
                &params.retention_set,
                params.miss_tolerance,
                params.thresholds.window_events,
            )?;
            settle(&mut sim, params.retention_set.configs(), idx)?;
            sim.run_all(source);
            let out = sim.finish();
            Ok(finish_run(
                policy,
                params.retention_set.configs()[idx].label.clone(),
                None,
                Some(TuningMode::MissBased),
                samples,
                out,
            ))
        }
        Policy::LarsPfd(n) => {
            let prefetch = main_prefetch(params, n)?;
            let mut sim = build_sim(params, params.retention_set.longest().clone(), None);
            let (idx, samples) = miss_based_tune(
                &mut sim,
                source,
                &params.retention_set,
                params.miss_tolerance,
                params.thresholds.window_events,
            )?;
            settle(&mut sim, params.retention_set.configs(), idx)?;
            sim.configure_prefetch(prefetch);
            sim.set_prefetch_enabled(true);
            sim.run_all(source);
            let out = sim.finish();
            Ok(finish_run(
                policy,
                params.retention_set.configs()[idx].label.clone(),
                Some(n),
                Some(TuningMode::MissBased),
                samples,
                out,
            ))
        }
        Policy::LarsNst => {
            let prefetch = main_prefetch(params, 1)?;
            let mut sim = build_sim(params, params.retention_set.longest().clone(), None);
            let (idx, samples) = miss_based_tune(
                &mut sim,
                source,
                &params.retention_set,
                params.miss_tolerance,
                params.thresholds.window_events,
            )?;
            settle(&mut sim, params.retention_set.configs(), idx)?;
            sim.configure_prefetch(prefetch);
            sim.set_prefetch_enabled(true);
            sim.enable_nst(params.nst);
            sim.run_all(source);
            let distance = sim.nst_distance();
            let out = sim.finish();
            Ok(finish_run(
                policy,
                params.retention_set.configs()[idx].label.clone(),
                distance,
                Some(TuningMode::MissBased),
                samples,
                out,
            ))
        }
        Policy::PartRpc => {
            let sampling = PrefetchConfig::new(1, 1, params.trigger_on_expiration_miss)?;
            let mut sim = build_sim(
                params,
                params.retention_set.longest().clone(),
                Some(sampling),
            );
            let decision = part_tune(
                &mut sim,
                source,
                &params.retention_set,
                &params.thresholds,
                params.miss_tolerance,
            )?;
            sim.configure_prefetch(main_prefetch(params, decision.distance)?);
            sim.set_prefetch_enabled(true);
            sim.run_all(source);
            let out = sim.finish();
            Ok(finish_run(
                policy,
                decision.retention.label.clone(),
                Some(decision.distance),
                Some(decision.mode),
                decision.samples,
                out,
            ))
        }
        Policy::PartNst => {
            let sampling = PrefetchConfig::new(1, 1, params.trigger_on_expiration_miss)?;
            let mut sim = build_sim(
                params,
                params.retention_set.longest().clone(),
                Some(sampling),
            );
            let decision = part_tune(
                &mut sim,
                source,
                &params.retention_set,
                &params.thresholds,
                params.miss_tolerance,
            )?;
            sim.configure_prefetch(main_prefetch(params, 1)?);
            sim.set_prefetch_enabled(true);
            sim.enable_nst(params.nst);
            sim.run_all(source);
            let distance = sim.nst_distance();
            let out = sim.finish();
            Ok(finish_run(
                policy,
                decision.retention.label.clone(),
                distance,
                Some(decision.mode),
                decision.samples,
                out,
            ))
        }
    }
}

fn finish_run(
    policy: Policy,
    retention_label: String,
    distance: Option<u32>,
    tuning_mode: Option<TuningMode>,
    samples: Vec<WindowSample>,
    out: RunOutput,
) -> PolicyRun {
    PolicyRun {
        policy,
        retention_label,
        distance,
        tuning_mode,
        counters: out.counters,
        report: out.report,
        samples,
        end_cycle: out.end_cycle,
    }
}

/// Runs a fixed `(retention, prefetch)` cell with no tuning — the unit of a
/// sweep grid.
pub fn run_fixed(
    source: &mut dyn TraceSource,
    retention: RetentionConfig,
    prefetch: Option<PrefetchConfig>,
    params: &PolicyParams,
) -> RunOutput {
    let mut sim = build_sim(params, retention, prefetch);
    sim.run_all(source);
    sim.finish()
}
