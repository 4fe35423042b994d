//! The `sweep` subcommand: brute-force grid over retention levels,
//! prefetch distances, or both, one fixed-configuration simulation per
//! cell. Cells run in parallel but rows are emitted in grid order
//! (longest retention first, then distance ascending), and the single
//! cheapest cell is flagged `is_min_energy = 1`.

use std::path::PathBuf;

use rayon::prelude::*;

use retsim_core::prefetch::DISTANCES;
use retsim_core::sim::RunOutput;
use retsim_core::tuning::run_fixed;
use retsim_core::{PrefetchConfig, RetentionConfig};

use crate::config::ExperimentConfig;
use crate::runner::{counter_fields, COUNTER_COLUMNS};
use crate::AppError;

pub const SWEEP_SCHEMA: &str = "retsim-sweep-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Retention,
    Distance,
    Both,
}

impl Axis {
    pub fn parse(name: &str) -> Option<Axis> {
        match name {
            "retention" => Some(Axis::Retention),
            "distance" => Some(Axis::Distance),
            "both" => Some(Axis::Both),
            _ => None,
        }
    }
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub axis: Axis,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

struct Cell {
    retention: RetentionConfig,
    /// `None` runs the cell without prefetching.
    distance: Option<u32>,
}

fn grid(config: &ExperimentConfig, axis: Axis) -> Result<Vec<Cell>, AppError> {
    let set = config.retention_set()?;
    let retentions = set.configs();
    let prefetch_distances: Vec<Option<u32>> = match axis {
        Axis::Retention => {
            // Distance stays at the configured prefetcher setting (or off).
            vec![config.prefetch_config()?.map(|p| p.distance)]
        }
        Axis::Distance | Axis::Both => {
            if !config.prefetch.enabled {
                return Err(AppError::usage(
                    "sweep axis includes distance but prefetch.enabled is false",
                ));
            }
            DISTANCES.iter().map(|&d| Some(d)).collect()
        }
    };
    let retentions: Vec<&RetentionConfig> = match axis {
        Axis::Distance => vec![retentions.first().expect("validated: non-empty set")],
        Axis::Retention | Axis::Both => retentions.iter().collect(),
    };

    let mut cells = Vec::new();
    for retention in retentions {
        for &distance in &prefetch_distances {
            cells.push(Cell {
                retention: retention.clone(),
                distance,
            });
        }
    }
    Ok(cells)
}

fn sweep_header() -> Vec<String> {
    let mut h = vec![
        "schema".to_string(),
        "workload".to_string(),
        "retention".to_string(),
        "retention_cycles".to_string(),
        "distance".to_string(),
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
            "total_latency_cycles",
            "end_cycle",
            "is_min_energy",
        ]
        .map(String::from),
    );
    h
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), AppError> {
    let config = ExperimentConfig::load(&args.config)?;
    let base_dir = args.config.parent().unwrap_or(std::path::Path::new("."));
    let trace = config.build_trace(base_dir)?;
    let params = config.policy_params()?;
    let cells = grid(&config, args.axis)?;

    let outputs: Vec<RunOutput> = cells
        .par_iter()
        .map(|cell| {
            let prefetch = cell.distance.map(|d| {
                PrefetchConfig::new(
                    config.prefetch.degree,
                    d,
                    config.prefetch.trigger_on_expiration_miss,
                )
                .expect("distance comes from the supported ladder")
            });
            run_fixed(&mut trace.reset(), cell.retention.clone(), prefetch, &params)
        })
        .collect();

    // First cell in grid order wins energy ties, keeping the flag stable.
    let min_energy = outputs
        .iter()
        .map(|o| o.report.total_units())
        .min()
        .expect("grid is never empty");
    let min_idx = outputs
        .iter()
        .position(|o| o.report.total_units() == min_energy)
        .unwrap();

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}-sweep.csv", config.name)));
    let mut writer = csv::Writer::from_path(&out)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", out.display())))?;
    writer.write_record(sweep_header())?;
    for (i, (cell, output)) in cells.iter().zip(&outputs).enumerate() {
        let mut row = vec![
            SWEEP_SCHEMA.to_string(),
            config.name.clone(),
            cell.retention.label.clone(),
            cell.retention.retention_cycles.to_string(),
            cell.distance.map(|d| d.to_string()).unwrap_or_default(),
        ];
        row.extend(counter_fields(&output.counters).map(|v| v.to_string()));
        let r = &output.report;
        row.extend([
            r.dynamic_units.to_string(),
            r.leakage_units.to_string(),
            r.migration_units.to_string(),
            r.total_units().to_string(),
            format!("{:.3}", r.total_nj()),
            r.demand_latency_cycles.to_string(),
            r.total_latency_cycles().to_string(),
            output.end_cycle.to_string(),
            if i == min_idx { "1" } else { "0" }.to_string(),
        ]);
        writer.write_record(row)?;
    }
    writer.flush().map_err(AppError::from)?;

    if !args.quiet {
        let best = &cells[min_idx];
        println!(
            "swept {} cells; minimum energy at retention {} distance {} ({:.3} nJ)",
            cells.len(),
            best.retention.label,
            best.distance
                .map(|d| d.to_string())
                .unwrap_or_else(|| "-".into()),
            outputs[min_idx].report.total_nj(),
        );
        println!("wrote {}", out.display());
    }
    Ok(())
}
