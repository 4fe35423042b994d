//! The `report` subcommand: merge one or more `run` CSVs, normalize every
//! policy against a baseline within each workload, and emit a long-format
//! plot-ready CSV (`metric,workload,policy,value`) plus per-metric geometric
//! means across workloads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::runner::RUN_SCHEMA;
use crate::AppError;

pub const REPORT_SCHEMA: &str = "retsim-report-v1";

/// The label used for the cross-workload geometric-mean rows.
pub const GEOMEAN: &str = "geomean";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: schema '{found}' is not '{expected}'")]
    SchemaMismatch {
        path: PathBuf,
        row: usize,
        found: String,
        expected: String,
    },
    #[error("{path}: row {row}: bad value '{value}' in column '{column}'")]
    BadValue {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("workload '{workload}' has two rows for policy '{policy}'")]
    DuplicatePolicy { workload: String, policy: String },
    #[error("workload '{workload}' has no row for baseline policy '{baseline}'")]
    MissingBaseline { workload: String, baseline: String },
    #[error("workload '{workload}': baseline '{baseline}' has zero energy or latency")]
    ZeroBaseline { workload: String, baseline: String },
    #[error("no input rows")]
    Empty,
}

#[derive(Debug, Clone)]
struct RunRow {
    workload: String,
    policy: String,
    total_units: u128,
    total_latency_cycles: u64,
}

fn read_rows(path: &Path) -> Result<Vec<RunRow>, ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReportError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let schema_col = col("schema")?;
    let workload_col = col("workload")?;
    let policy_col = col("policy")?;
    let units_col = col("total_units")?;
    let latency_col = col("total_latency_cycles")?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        let row_no = i + 2; // 1-based, after the header
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let schema = field(schema_col);
        if schema != RUN_SCHEMA {
            return Err(ReportError::SchemaMismatch {
                path: path.to_path_buf(),
                row: row_no,
                found: schema,
                expected: RUN_SCHEMA.to_string(),
            });
        }
        let parse = |idx: usize, column: &str| -> Result<u128, ReportError> {
            let value = field(idx);
            value.parse().map_err(|_| ReportError::BadValue {
                path: path.to_path_buf(),
                row: row_no,
                column: column.to_string(),
                value,
            })
        };
        rows.push(RunRow {
            workload: field(workload_col),
            policy: field(policy_col),
            total_units: parse(units_col, "total_units")?,
            total_latency_cycles: parse(latency_col, "total_latency_cycles")? as u64,
        });
    }
    Ok(rows)
}

/// One normalized data point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: &'static str,
    pub workload: String,
    pub policy: String,
    pub value: f64,
}

pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    pub baseline: Option<String>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

/// Normalizes all rows and appends the geometric means. Policies keep their
/// first-seen order; workloads sort lexically.
fn normalize(rows: &[RunRow], baseline: &Option<String>) -> Result<Vec<ReportRow>, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut policies: Vec<String> = Vec::new();
    for row in rows {
        if !policies.contains(&row.policy) {
            policies.push(row.policy.clone());
        }
    }

    let mut by_workload: BTreeMap<String, Vec<&RunRow>> = BTreeMap::new();
    for row in rows {
        let group = by_workload.entry(row.workload.clone()).or_default();
        if group.iter().any(|r| r.policy == row.policy) {
            return Err(ReportError::DuplicatePolicy {
                workload: row.workload.clone(),
                policy: row.policy.clone(),
            });
        }
        group.push(row);
    }

    let mut out = Vec::new();
    // (policy, metric) -> (sum of ln ratio, workload count)
    let mut geo: BTreeMap<(String, &'static str), (f64, u32)> = BTreeMap::new();
    for (workload, group) in &by_workload {
        let base_policy = match baseline {
            Some(b) => b.clone(),
            None => group[0].policy.clone(),
        };
        let base = group
            .iter()
            .find(|r| r.policy == base_policy)
            .ok_or_else(|| ReportError::MissingBaseline {
                workload: workload.clone(),
                baseline: base_policy.clone(),
            })?;
        if base.total_units == 0 || base.total_latency_cycles == 0 {
            return Err(ReportError::ZeroBaseline {
                workload: workload.clone(),
                baseline: base_policy.clone(),
            });
        }
        for policy in &policies {
            let Some(row) = group.iter().find(|r| &r.policy == policy) else {
                continue;
            };
            let points = [
                ("energy_ratio", row.total_units as f64 / base.total_units as f64),
                (
                    "latency_ratio",
                    row.total_latency_cycles as f64 / base.total_latency_cycles as f64,
                ),
            ];
            for (metric, value) in points {
                out.push(ReportRow {
                    metric,
                    workload: workload.clone(),
                    policy: policy.clone(),
                    value,
                });
                let slot = geo.entry((policy.clone(), metric)).or_insert((0.0, 0));
                slot.0 += value.ln();
                slot.1 += 1;
            }
        }
    }
    for metric in ["energy_ratio", "latency_ratio"] {
        for policy in &policies {
            if let Some((ln_sum, n)) = geo.get(&(policy.clone(), metric)) {
                out.push(ReportRow {
                    metric,
                    workload: GEOMEAN.to_string(),
                    policy: policy.clone(),
                    value: (ln_sum / f64::from(*n)).exp(),
                });
            }
        }
    }
    Ok(out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), AppError> {
    let mut rows = Vec::new();
    for path in &args.inputs {
        rows.extend(read_rows(path)?);
    }
    let report = normalize(&rows, &args.baseline)?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("report.csv"));
    let mut writer = csv::Writer::from_path(&out)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", out.display())))?;
    writer.write_record(["schema", "metric", "workload", "policy", "value"])?;
    for row in &report {
        writer.write_record([
            REPORT_SCHEMA,
            row.metric,
            &row.workload,
            &row.policy,
            &format!("{:.6}", row.value),
        ])?;
    }
    writer.flush().map_err(AppError::from)?;

    if !args.quiet {
        print_tables(&report);
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn print_tables(report: &[ReportRow]) {
    for metric in ["energy_ratio", "latency_ratio"] {
        let mut workloads: Vec<&str> = Vec::new();
        let mut policies: Vec<&str> = Vec::new();
        for row in report.iter().filter(|r| r.metric == metric) {
            if !workloads.contains(&row.workload.as_str()) {
                workloads.push(&row.workload);
            }
            if !policies.contains(&row.policy.as_str()) {
                policies.push(&row.policy);
            }
        }
        println!("{metric}:");
        print!("{:<12}", "policy");
        for w in &workloads {
            print!(" {w:>14}");
        }
        println!();
        for policy in &policies {
            print!("{policy:<12}");
            for workload in &workloads {
                let cell = report
                    .iter()
                    .find(|r| {
                        r.metric == metric && &r.workload == workload && &r.policy == policy
                    })
                    .map(|r| format!("{:.4}", r.value))
                    .unwrap_or_else(|| "-".into());
                print!(" {cell:>14}");
            }
            println!();
        }
    }
}
