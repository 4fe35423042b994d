use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use retsim::report::{cmd_report, ReportArgs};
use retsim::runner::{cmd_gen_trace, cmd_run, GenTraceArgs, RunArgs};
use retsim::sweep::{cmd_sweep, Axis, SweepArgs};
use retsim::AppError;

#[derive(Parser)]
#[command(
    name = "retsim",
    version,
    about = "Trace-driven simulator for a reduced-retention STTRAM L1 data cache"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run each configured policy over one trace and compare them.
    Run {
        /// Experiment file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Trace file overriding the config's trace source.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trace format: text or binary (default: infer from extension).
        #[arg(long)]
        format: Option<String>,
        /// Output CSV path (default: <name>-run.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Baseline policy for the comparison table (default: first policy).
        #[arg(long)]
        baseline: Option<String>,
        /// Suppress the comparison table.
        #[arg(long)]
        quiet: bool,
    },
    /// Brute-force a (retention, distance) grid with fixed configurations.
    Sweep {
        /// Experiment file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Grid axis to sweep.
        #[arg(long, value_enum, default_value_t = AxisArg::Both)]
        axis: AxisArg,
        /// Output CSV path (default: <name>-sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the summary line.
        #[arg(long)]
        quiet: bool,
    },
    /// Merge run CSVs into normalized per-workload tables with geomeans.
    Report {
        /// Baseline policy (default: the first policy of each workload).
        #[arg(long)]
        baseline: Option<String>,
        /// Output CSV path (default: report.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the printed tables.
        #[arg(long)]
        quiet: bool,
        /// Input run CSVs.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate the config's synthetic trace and write it to a file.
    GenTrace {
        /// Experiment file (TOML) with [[trace.streams]] sections.
        #[arg(long)]
        config: PathBuf,
        /// Destination trace file.
        #[arg(long)]
        out: PathBuf,
        /// Trace format: text or binary (default: infer from extension).
        #[arg(long)]
        format: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Retention,
    Distance,
    Both,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::Retention => Axis::Retention,
            AxisArg::Distance => Axis::Distance,
            AxisArg::Both => Axis::Both,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run {
            config,
            trace,
            format,
            out,
            baseline,
            quiet,
        } => cmd_run(&RunArgs {
            config,
            trace,
            format,
            out,
            baseline,
            quiet,
        }),
        Command::Sweep {
            config,
            axis,
            out,
            quiet,
        } => cmd_sweep(&SweepArgs {
            config,
            axis: axis.into(),
            out,
            quiet,
        }),
        Command::Report {
            baseline,
            out,
            quiet,
            inputs,
        } => cmd_report(&ReportArgs {
            inputs,
            baseline,
            out,
            quiet,
        }),
        Command::GenTrace {
            config,
            out,
            format,
        } => cmd_gen_trace(&GenTraceArgs {
            config,
            out,
            format,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Usage errors exit with 1 rather than clap's default 2, which
            // this tool reserves for data errors.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code as u8)
        }
    }
}
