//! The `run` and `gen-trace` subcommands.
//!
//! `run` executes every configured policy over the same trace, writes one
//! CSV row per policy (schema `retsim-run-v1`), and prints a comparison
//! table normalized to the baseline policy. All energy columns are exact
//! integer units so repeated runs are byte-identical.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use retsim_core::metrics::compare;
use retsim_core::tuning::{run_policy, PolicyRun, TuningMode};
use retsim_core::{CounterSet, VecTrace};

use crate::config::ExperimentConfig;
use crate::tracefile::{self, TraceFormat};
use crate::AppError;

pub const RUN_SCHEMA: &str = "retsim-run-v1";

/// Counter columns shared by the run and sweep CSVs, in emission order.
pub const COUNTER_COLUMNS: [&str; 15] = [
    "demand_accesses",
    "demand_hits",
    "demand_misses",
    "expiration_misses",
    "total_prefetches",
    "total_mshr_requests",
    "expired_unused_prefetches",
    "late_prefetches",
    "timely_prefetches",
    "unused_prefetches",
    "writebacks",
    "prefetchable_expired_reloads",
    "expirations",
    "fills",
    "evictions",
];

pub fn counter_fields(c: &CounterSet) -> [u64; 15] {
    [
        c.demand_accesses,
        c.demand_hits,
        c.demand_misses,
        c.expiration_misses,
        c.total_prefetches,
        c.total_mshr_requests,
        c.expired_unused_prefetches,
        c.late_prefetches,
        c.timely_prefetches,
        c.unused_prefetches,
        c.writebacks,
        c.prefetchable_expired_reloads,
        c.expirations,
        c.fills,
        c.evictions,
    ]
}

pub fn run_header() -> Vec<String> {
    let mut h = vec![
        "schema".to_string(),
        "workload".to_string(),
        "policy".to_string(),
        "retention".to_string(),
        "distance".to_string(),
        "tuning_mode".to_string(),
    ];
    h.extend(COUNTER_COLUMNS.iter().map(|c| c.to_string()));
    h.extend(
        [
            "dynamic_units",
            "leakage_units",
            "migration_units",
            "total_units",
            "energy_nj",
            "demand_latency_cycles",
            "migration_cycles",
            "total_latency_cycles",
            "end_cycle",
            "energy_ratio",
            "latency_ratio",
        ]
        .map(String::from),
    );
    h
}

fn tuning_mode_cell(mode: Option<TuningMode>) -> &'static str {
    match mode {
        Some(TuningMode::ExpiredPf) => "expired_pf",
        Some(TuningMode::MissBased) => "miss_based",
        None => "",
    }
}

fn run_row(workload: &str, run: &PolicyRun, baseline: &PolicyRun) -> Vec<String> {
    let mut row = vec![
        RUN_SCHEMA.to_string(),
        workload.to_string(),
        run.policy.to_string(),
        run.retention_label.clone(),
        run.distance.map(|d| d.to_string()).unwrap_or_default(),
        tuning_mode_cell(run.tuning_mode).to_string(),
    ];
    row.extend(counter_fields(&run.counters).map(|v| v.to_string()));
    let r = &run.report;
    let base = &baseline.report;
    row.extend([
        r.dynamic_units.to_string(),
        r.leakage_units.to_string(),
        r.migration_units.to_string(),
        r.total_units().to_string(),
        format!("{:.3}", r.total_nj()),
        r.demand_latency_cycles.to_string(),
        r.migration_cycles.to_string(),
        r.total_latency_cycles().to_string(),
        run.end_cycle.to_string(),
        format!("{:.6}", ratio(r.total_units(), base.total_units())),
        format!(
            "{:.6}",
            ratio(
                r.total_latency_cycles() as u128,
                base.total_latency_cycles() as u128
            )
        ),
    ]);
    row
}

fn ratio(value: u128, base: u128) -> f64 {
    if base == 0 {
        0.0
    } else {
        value as f64 / base as f64
    }
}

pub struct RunArgs {
    pub config: PathBuf,
    pub trace: Option<PathBuf>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
    pub baseline: Option<String>,
    pub quiet: bool,
}

/// Loads the experiment, applies flag overrides, and returns the config,
/// its base directory, and the trace.
fn prepare(
    config_path: &Path,
    trace: &Option<PathBuf>,
    format: &Option<String>,
    baseline: &Option<String>,
) -> Result<(ExperimentConfig, VecTrace), AppError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(format) = format {
        config.trace.format = Some(format.clone());
    }
    if let Some(path) = trace {
        // Flag paths are relative to the working directory, not the config.
        config.trace.file = Some(path.clone());
        config.trace.streams.clear();
    }
    if let Some(baseline) = baseline {
        config.baseline = Some(baseline.clone());
    }
    config.validate()?;
    let base_dir = if trace.is_some() {
        Path::new(".")
    } else {
        config_path.parent().unwrap_or(Path::new("."))
    };
    let trace = config.build_trace(base_dir)?;
    Ok((config, trace))
}

pub fn cmd_run(args: &RunArgs) -> Result<(), AppError> {
    let (config, trace) = prepare(&args.config, &args.trace, &args.format, &args.baseline)?;
    let policies = config.policies()?;
    let params = config.policy_params()?;

    let runs: Vec<PolicyRun> = policies
        .par_iter()
        .map(|&policy| run_policy(&mut trace.reset(), policy, &params))
        .collect::<Result<_, _>>()?;

    let baseline_name = config.baseline_policy();
    let baseline_idx = policies
        .iter()
        .position(|p| p.to_string() == baseline_name)
        .expect("validated: baseline is listed");

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-run.csv", config.name)));
    let mut writer = csv::Writer::from_path(&out)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", out.display())))?;
    writer.write_record(run_header())?;
    for run in &runs {
        writer.write_record(run_row(&config.name, run, &runs[baseline_idx]))?;
    }
    writer.flush().map_err(AppError::from)?;

    if !args.quiet {
        print_comparison(&config.name, &runs, baseline_idx)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_comparison(workload: &str, runs: &[PolicyRun], baseline: usize) -> Result<(), AppError> {
    println!(
        "workload {workload}: {} accesses, baseline {}",
        runs[baseline].counters.demand_accesses, runs[baseline].policy
    );
    println!(
        "{:<12} {:>9} {:>8} {:>12} {:>13} {:>12} {:>13}",
        "policy", "retention", "distance", "energy_ratio", "latency_ratio", "energy_red%", "latency_red%"
    );
    let entries: Vec<(String, _)> = runs
        .iter()
        .map(|r| (r.policy.to_string(), r.report))
        .collect();
    let borrowed: Vec<(&str, _)> = entries.iter().map(|(l, r)| (l.as_str(), *r)).collect();
    let rows = compare(&borrowed, baseline)
        .map_err(|e| AppError::data(format!("comparison failed: {e}")))?;

    let print_row = |run: &PolicyRun, energy: f64, latency: f64| {
        println!(
            "{:<12} {:>9} {:>8} {:>12.4} {:>13.4} {:>12.2} {:>13.2}",
            run.policy.to_string(),
            run.retention_label,
            run.distance.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
            energy,
            latency,
            (1.0 - energy) * 100.0,
            (1.0 - latency) * 100.0,
        );
    };
    print_row(&runs[baseline], 1.0, 1.0);
    let mut row_iter = rows.iter();
    for (i, run) in runs.iter().enumerate() {
        if i == baseline {
            continue;
        }
        let row = row_iter.next().expect("one row per non-baseline run");
        print_row(run, row.energy_ratio, row.latency_ratio);
    }
    Ok(())
}

pub struct GenTraceArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub format: Option<String>,
}

pub fn cmd_gen_trace(args: &GenTraceArgs) -> Result<(), AppError> {
    let config = ExperimentConfig::load(&args.config)?;
    if config.trace.streams.is_empty() {
        return Err(AppError::usage(
            "gen-trace needs [[trace.streams]] sections in the config",
        ));
    }
    let format = match &args.format {
        Some(name) => TraceFormat::parse(name)
            .ok_or_else(|| AppError::usage(format!("unknown trace format '{name}'")))?,
        None => TraceFormat::infer(&args.out),
    };
    let trace = config.generate_trace()?;
    tracefile::write(&args.out, format, &trace)?;
    println!("wrote {} events to {}", trace.len(), args.out.display());
    Ok(())
}
