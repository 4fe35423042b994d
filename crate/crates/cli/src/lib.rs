//! File formats, configuration, and experiment drivers around `retsim-core`.
//!
//! The binary exposes four subcommands — `run`, `sweep`, `report`, and
//! `gen-trace` — all configured by a TOML experiment file (flags override
//! file values). Errors split into usage errors (bad configuration or
//! arguments, exit code 1) and data errors (unreadable traces, schema
//! mismatches, exhausted inputs, exit code 2).

pub mod config;
pub mod report;
pub mod runner;
pub mod sweep;
pub mod tracefile;

use std::fmt;

/// Top-level error with the exit code contract attached.
#[derive(Debug)]
pub struct AppError {
    pub message: String,
    pub exit_code: i32,
}

impl AppError {
    pub fn usage(message: impl Into<String>) -> Self {
        AppError {
            message: message.into(),
            exit_code: 1,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        AppError {
            message: message.into(),
            exit_code: 2,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for AppError {}

impl From<config::ConfigError> for AppError {
    fn from(e: config::ConfigError) -> Self {
        AppError::usage(e.to_string())
    }
}

impl From<tracefile::TraceFileError> for AppError {
    fn from(e: tracefile::TraceFileError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<report::ReportError> for AppError {
    fn from(e: report::ReportError) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::data(e.to_string())
    }
}

impl From<retsim_core::tuning::TuneError> for AppError {
    fn from(e: retsim_core::tuning::TuneError) -> Self {
        use retsim_core::tuning::TuneError;
        match e {
            // A trace too short for the configured windows is a data problem;
            // the rest are configuration mistakes.
            TuneError::TraceExhausted { .. } => AppError::data(e.to_string()),
            TuneError::InvalidPrefetch(_) | TuneError::Cache(_) => AppError::usage(e.to_string()),
        }
    }
}
