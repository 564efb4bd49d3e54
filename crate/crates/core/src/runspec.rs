//! Resolution of a run request: preset or config file plus field overrides
//! into a validated `ClusterConfig`, and a workload request into a trace.

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

use crate::topology::{AccessMode, ClusterConfig, HierarchyLevel, TopologyError};
use crate::workloads::{
    gen_dotp, gen_fft, gen_matmul, gen_random, BaseAlignment, WorkloadError, WorkloadTrace,
};

#[derive(Debug, Error)]
pub enum RunSpecError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("config file {path}: {msg}")]
    ConfigFile { path: String, msg: String },
    #[error("{0}")]
    Usage(String),
}

/// Flat key/value config document mirroring the `ClusterConfig` field names;
/// any subset of fields may appear and overrides the base configuration.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub n_pe: Option<u32>,
    pub k_ports: Option<u32>,
    pub ccs_per_tile: Option<u32>,
    pub banks_per_cc: Option<u32>,
    pub bank_capacity_words: Option<u32>,
    pub gf: Option<u32>,
    pub mode: Option<AccessMode>,
    pub rob_depth: Option<u32>,
    pub vlen_bits: Option<u32>,
    pub burst_fifo_depth: Option<u32>,
    pub levels: Option<Vec<HierarchyLevel>>,
    pub remote_ports_per_level: Option<Vec<u32>>,
}

impl ConfigOverrides {
    pub fn is_empty(&self) -> bool {
        self.n_pe.is_none()
            && self.k_ports.is_none()
            && self.ccs_per_tile.is_none()
            && self.banks_per_cc.is_none()
            && self.bank_capacity_words.is_none()
            && self.gf.is_none()
            && self.mode.is_none()
            && self.rob_depth.is_none()
            && self.vlen_bits.is_none()
            && self.burst_fifo_depth.is_none()
            && self.levels.is_none()
            && self.remote_ports_per_level.is_none()
    }

    pub fn apply(&self, mut cfg: ClusterConfig) -> Result<ClusterConfig, TopologyError> {
        if let Some(v) = self.n_pe {
            cfg.n_pe = v;
        }
        if let Some(v) = self.k_ports {
            cfg.k_ports = v;
        }
        if let Some(v) = self.ccs_per_tile {
            cfg.ccs_per_tile = v;
        }
        if let Some(v) = self.banks_per_cc {
            cfg.banks_per_cc = v;
        }
        if let Some(v) = self.bank_capacity_words {
            cfg.bank_capacity_words = v;
        }
        if let Some(v) = self.gf {
            cfg.gf = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
            if v == AccessMode::Burst && self.rob_depth.is_none() {
                // outstanding support doubles with burst transfers
                cfg.rob_depth *= 2;
            }
        }
        if let Some(v) = self.rob_depth {
            cfg.rob_depth = v;
        }
        if let Some(v) = self.vlen_bits {
            cfg.vlen_bits = v;
        }
        if let Some(v) = self.burst_fifo_depth {
            cfg.burst_fifo_depth = v;
        }
        if let Some(v) = &self.levels {
            cfg.levels = v.clone();
            cfg.remote_ports_per_level = None;
        }
        if let Some(v) = &self.remote_ports_per_level {
            cfg.remote_ports_per_level = Some(v.clone());
        }
        cfg.validate()
    }
}

/// Reads a flat TOML config document into overrides.
pub fn overrides_from_file(path: &Path) -> Result<ConfigOverrides, RunSpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunSpecError::ConfigFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| RunSpecError::ConfigFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Parses `name:fanout:latency,...` level descriptions from the CLI.
pub fn parse_levels(spec: &str) -> Result<Vec<HierarchyLevel>, RunSpecError> {
    spec.split(',')
        .map(|part| {
            let fields: Vec<&str> = part.trim().split(':').collect();
            if fields.len() != 3 {
                return Err(RunSpecError::Usage(format!(
                    "level `{part}` is not name:fanout:latency"
                )));
            }
            let fanout = fields[1]
                .parse()
                .map_err(|_| RunSpecError::Usage(format!("bad fanout in `{part}`")))?;
            let latency = fields[2]
                .parse()
                .map_err(|_| RunSpecError::Usage(format!("bad latency in `{part}`")))?;
            Ok(HierarchyLevel::new(fields[0], fanout, latency))
        })
        .collect()
}

/// Workload request resolved against a config into a trace.
#[derive(Debug, Clone)]
pub enum WorkloadSpec {
    Random {
        vectors_per_pe: u32,
        alignment: BaseAlignment,
    },
    Dotp {
        n: u64,
    },
    Matmul {
        n: u64,
    },
    Fft {
        n_points: u64,
        instances: u32,
    },
    TraceFile {
        path: String,
    },
}

impl WorkloadSpec {
    pub fn generate(&self, cfg: &ClusterConfig, seed: u64) -> Result<WorkloadTrace, RunSpecError> {
        let trace = match self {
            WorkloadSpec::Random { vectors_per_pe, alignment } => {
                gen_random(cfg, *vectors_per_pe, seed, *alignment)?
            }
            WorkloadSpec::Dotp { n } => gen_dotp(cfg, *n)?,
            WorkloadSpec::Matmul { n } => gen_matmul(cfg, *n)?,
            WorkloadSpec::Fft { n_points, instances } => gen_fft(cfg, *n_points, *instances)?,
            WorkloadSpec::TraceFile { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| RunSpecError::ConfigFile {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                crate::workloads::trace_from_text(cfg.n_pe, &text)?
            }
        };
        crate::workloads::validate_trace(cfg, &trace)?;
        Ok(trace)
    }
}
