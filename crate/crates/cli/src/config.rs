//! The TOML experiment file: trace source (a file or synthetic stream
//! specs), policy list, cache geometry, prefetch/tuning/NST parameters, and
//! the retention ladder. Every field maps one-to-one onto a core type;
//! validation happens eagerly in [`ExperimentConfig::load`] so commands can
//! assume a well-formed experiment.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use retsim_core::cache::GeometryError;
use retsim_core::prefetch::PrefetchConfigError;
use retsim_core::trace::{gen_mixed, RandomSpec, StreamSpec, StridedSpec, TraceError};
use retsim_core::tuning::RetentionSetError;
use retsim_core::{
    AccessKind, CacheGeometry, NstConfig, PartThresholds, Policy, PolicyParams, PrefetchConfig,
    RetentionConfig, RetentionSet, VecTrace,
};

use crate::tracefile::{self, TraceFormat};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("field 'policies' must list at least one policy")]
    NoPolicies,
    #[error("field 'policies': unknown policy '{0}'")]
    UnknownPolicy(String),
    #[error("field 'baseline': '{0}' is not in the policies list")]
    BaselineNotListed(String),
    #[error("section 'trace' needs exactly one of 'file' or 'streams'")]
    TraceSourceAmbiguous,
    #[error("field 'trace.format': unknown format '{0}' (expected 'text' or 'binary')")]
    UnknownFormat(String),
    #[error("field 'retention.labels': unknown label '{0}'")]
    UnknownRetentionLabel(String),
    #[error("field 'retention.labels': {0}")]
    BadRetentionSet(RetentionSetError),
    #[error("section 'geometry': {0}")]
    BadGeometry(GeometryError),
    #[error("section 'prefetch': {0}")]
    BadPrefetch(PrefetchConfigError),
    #[error("trace.streams[{index}]: {source}")]
    BadStream {
        index: usize,
        #[source]
        source: TraceError,
    },
}

fn default_clock() -> u64 {
    2_000_000_000
}

fn default_memory_latency() -> u64 {
    100
}

fn default_mshr() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_clock")]
    pub clock_hz: u64,
    #[serde(default = "default_memory_latency")]
    pub memory_latency: u64,
    #[serde(default = "default_mshr")]
    pub mshr_entries: usize,
    pub policies: Vec<String>,
    #[serde(default)]
    pub baseline: Option<String>,
    pub trace: TraceSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub prefetch: PrefetchSection,
    #[serde(default)]
    pub tuning: TuningSection,
    #[serde(default)]
    pub nst: NstSection,
    #[serde(default)]
    pub retention: RetentionSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub streams: Vec<StreamSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamSection {
    Strided {
        pc: u64,
        base: u64,
        stride: i64,
        count: u64,
        #[serde(default)]
        start_cycle: u64,
        #[serde(default = "one")]
        inter_arrival: u64,
        #[serde(default)]
        access: AccessSection,
    },
    Random {
        pc: u64,
        lo: u64,
        hi: u64,
        count: u64,
        #[serde(default)]
        start_cycle: u64,
        #[serde(default = "one")]
        inter_arrival: u64,
        #[serde(default)]
        access: AccessSection,
    },
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessSection {
    #[default]
    Read,
    Write,
}

impl From<AccessSection> for AccessKind {
    fn from(a: AccessSection) -> Self {
        match a {
            AccessSection::Read => AccessKind::Read,
            AccessSection::Write => AccessKind::Write,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub capacity: u64,
    pub block_size: u64,
    pub associativity: u64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            capacity: 32 * 1024,
            block_size: 64,
            associativity: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefetchSection {
    pub enabled: bool,
    pub degree: u32,
    pub distance: u32,
    pub trigger_on_expiration_miss: bool,
}

impl Default for PrefetchSection {
    fn default() -> Self {
        PrefetchSection {
            enabled: true,
            degree: 4,
            distance: 16,
            trigger_on_expiration_miss: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSection {
    pub window_events: u64,
    pub min_all_pf: f64,
    pub min_expired_pf_for_base: f64,
    pub growth_factor: f64,
    pub miss_tolerance: f64,
}

impl Default for TuningSection {
    fn default() -> Self {
        let t = PartThresholds::default();
        TuningSection {
            window_events: t.window_events,
            min_all_pf: t.min_all_pf,
            min_expired_pf_for_base: t.min_expired_pf_for_base,
            growth_factor: t.growth_factor,
            miss_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NstSection {
    pub raise_threshold: f64,
    pub lower_threshold: f64,
    pub window_demand_accesses: u64,
}

impl Default for NstSection {
    fn default() -> Self {
        let n = NstConfig::default();
        NstSection {
            raise_threshold: n.raise_threshold,
            lower_threshold: n.lower_threshold,
            window_demand_accesses: n.window_demand_accesses,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionSection {
    pub labels: Vec<String>,
}

impl Default for RetentionSection {
    fn default() -> Self {
        RetentionSection {
            labels: ["STT-1ms", "STT-100us", "STT-75us", "STT-50us", "STT-25us"]
                .map(String::from)
                .to_vec(),
        }
    }
}

fn retention_by_label(label: &str, clock_hz: u64) -> Option<RetentionConfig> {
    match label {
        "STT-1ms" => Some(RetentionConfig::stt_1ms(clock_hz)),
        "STT-100us" => Some(RetentionConfig::stt_100us(clock_hz)),
        "STT-75us" => Some(RetentionConfig::stt_75us(clock_hz)),
        "STT-50us" => Some(RetentionConfig::stt_50us(clock_hz)),
        "STT-25us" => Some(RetentionConfig::stt_25us(clock_hz)),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source: Box::new(source),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse {
                path: PathBuf::from("<inline>"),
                source: Box::new(source),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.policies()?;
        if let Some(baseline) = &self.baseline {
            if !self.policies.iter().any(|p| p == baseline) {
                return Err(ConfigError::BaselineNotListed(baseline.clone()));
            }
        }
        if self.trace.file.is_some() == !self.trace.streams.is_empty() {
            return Err(ConfigError::TraceSourceAmbiguous);
        }
        if let Some(format) = &self.trace.format {
            self.trace_format_of(format)?;
        }
        self.geometry()?;
        self.prefetch_config()?;
        self.retention_set()?;
        Ok(())
    }

    fn trace_format_of(&self, name: &str) -> Result<TraceFormat, ConfigError> {
        TraceFormat::parse(name).ok_or_else(|| ConfigError::UnknownFormat(name.to_string()))
    }

    pub fn policies(&self) -> Result<Vec<Policy>, ConfigError> {
        if self.policies.is_empty() {
            return Err(ConfigError::NoPolicies);
        }
        self.policies
            .iter()
            .map(|name| {
                name.parse()
                    .map_err(|_| ConfigError::UnknownPolicy(name.clone()))
            })
            .collect()
    }

    /// The normalization baseline: the `baseline` field, or the first policy.
    pub fn baseline_policy(&self) -> String {
        self.baseline
            .clone()
            .unwrap_or_else(|| self.policies[0].clone())
    }

    pub fn geometry(&self) -> Result<CacheGeometry, ConfigError> {
        CacheGeometry::new(
            self.geometry.capacity,
            self.geometry.block_size,
            self.geometry.associativity,
        )
        .map_err(ConfigError::BadGeometry)
    }

    pub fn prefetch_config(&self) -> Result<Option<PrefetchConfig>, ConfigError> {
        if !self.prefetch.enabled {
            return Ok(None);
        }
        PrefetchConfig::new(
            self.prefetch.degree,
            self.prefetch.distance,
            self.prefetch.trigger_on_expiration_miss,
        )
        .map(Some)
        .map_err(ConfigError::BadPrefetch)
    }

    pub fn retention_set(&self) -> Result<RetentionSet, ConfigError> {
        let configs = self
            .retention
            .labels
            .iter()
            .map(|label| {
                retention_by_label(label, self.clock_hz)
                    .ok_or_else(|| ConfigError::UnknownRetentionLabel(label.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        RetentionSet::new(configs).map_err(ConfigError::BadRetentionSet)
    }

    pub fn thresholds(&self) -> PartThresholds {
        PartThresholds {
            min_all_pf: self.tuning.min_all_pf,
            min_expired_pf_for_base: self.tuning.min_expired_pf_for_base,
            growth_factor: self.tuning.growth_factor,
            window_events: self.tuning.window_events,
        }
    }

    pub fn nst_config(&self) -> NstConfig {
        NstConfig {
            raise_threshold: self.nst.raise_threshold,
            lower_threshold: self.nst.lower_threshold,
            window_demand_accesses: self.nst.window_demand_accesses,
        }
    }

    pub fn policy_params(&self) -> Result<PolicyParams, ConfigError> {
        Ok(PolicyParams {
            geometry: self.geometry()?,
            retention_set: self.retention_set()?,
            sram: RetentionConfig::sram(self.clock_hz),
            thresholds: self.thresholds(),
            miss_tolerance: self.tuning.miss_tolerance,
            degree: self.prefetch.degree,
            trigger_on_expiration_miss: self.prefetch.trigger_on_expiration_miss,
            nst: self.nst_config(),
            mshr_capacity: self.mshr_entries,
            memory_latency: self.memory_latency,
        })
    }

    fn stream_specs(&self) -> Vec<StreamSpec> {
        self.trace
            .streams
            .iter()
            .map(|s| match *s {
                StreamSection::Strided {
                    pc,
                    base,
                    stride,
                    count,
                    start_cycle,
                    inter_arrival,
                    access,
                } => StreamSpec::Strided(StridedSpec {
                    pc,
                    base,
                    stride,
                    count,
                    start_cycle,
                    inter_arrival,
                    kind: access.into(),
                }),
                StreamSection::Random {
                    pc,
                    lo,
                    hi,
                    count,
                    start_cycle,
                    inter_arrival,
                    access,
                } => StreamSpec::Random(RandomSpec {
                    pc,
                    lo,
                    hi,
                    count,
                    start_cycle,
                    inter_arrival,
                    kind: access.into(),
                }),
            })
            .collect()
    }

    /// Generates the synthetic trace (usage errors on bad stream specs).
    pub fn generate_trace(&self) -> Result<VecTrace, ConfigError> {
        let specs = self.stream_specs();
        gen_mixed(&specs, self.seed).map_err(|source| ConfigError::BadStream {
            // Attribute the error to the stream that caused it when the
            // generator can tell us; zero-count/zero-stride checks run in
            // spec order, so the first offender is deterministic.
            index: first_offending_stream(&specs),
            source,
        })
    }

    /// Loads the trace from the configured file, or generates it. Paths are
    /// resolved relative to `base_dir` (the config file's directory).
    pub fn build_trace(&self, base_dir: &Path) -> Result<VecTrace, crate::AppError> {
        match &self.trace.file {
            Some(file) => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                let format = match &self.trace.format {
                    Some(name) => self.trace_format_of(name)?,
                    None => TraceFormat::infer(&path),
                };
                Ok(tracefile::read(&path, format)?)
            }
            None => Ok(self.generate_trace()?),
        }
    }
}

fn first_offending_stream(specs: &[StreamSpec]) -> usize {
    for (i, spec) in specs.iter().enumerate() {
        let bad = match spec {
            StreamSpec::Strided(s) => s.count == 0 || s.stride == 0,
            StreamSpec::Random(r) => r.count == 0 || r.lo >= r.hi,
        };
        if bad {
            return i;
        }
    }
    0
}
