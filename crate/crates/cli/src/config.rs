//! Run configuration: JSON files, flag overrides and validation.

use std::path::{Path, PathBuf};

use matchlab::economy::{EconomySpec, Family, MC_K};
use matchlab::estimation::Objective;
use matchlab::io::{parse_json, IoError};
use matchlab::montecarlo::TruthDistribution;
use matchlab::strategy::{StrategyError, StrategyKind, StrategyProfileSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Estimate,
    Counterfactual,
    Converge,
    Replicate,
}

/// Economy family plus optional overrides of its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomyConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_shares: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bounds: Option<(f64, f64)>,
}

impl EconomyConfig {
    pub fn spec(&self, seed: u64) -> EconomySpec {
        let mut spec = match self.family {
            Family::FullSupport => EconomySpec::full_support(vec![0.25; 3], seed),
            Family::McGeography => EconomySpec::mc_geography(seed),
            Family::Example1 => EconomySpec::example1(seed),
            Family::AppendixB => EconomySpec::appendix_b(seed),
        };
        if let Some(shares) = &self.capacity_shares {
            spec.n_colleges = shares.len();
            spec.capacity_shares = shares.clone();
        }
        if let Some(b) = self.u_bounds {
            spec.u_bounds = b;
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub economy: EconomyConfig,
    pub strategy: StrategyProfileSpec,
    pub n_samples: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Market size for single-size commands; family default when absent.
    pub k: Option<usize>,
    /// Market sizes for `converge`; family default when empty.
    pub k_grid: Vec<usize>,
    pub assumptions: Vec<Objective>,
    pub n_cutoff_samples: usize,
    pub n_deviators: usize,
    pub reference_seeds: usize,
    pub truth_distribution: TruthDistribution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Simulate,
            economy: EconomyConfig { family: Family::McGeography, capacity_shares: None, u_bounds: None },
            strategy: StrategyProfileSpec::new(StrategyKind::Tt),
            n_samples: 2,
            output_dir: PathBuf::from("out"),
            seed: 0,
            k: None,
            k_grid: Vec::new(),
            assumptions: vec![Objective::Wtt, Objective::Stability],
            n_cutoff_samples: 1000,
            n_deviators: 200,
            reference_seeds: 200,
            truth_distribution: TruthDistribution::Policy,
        }
    }
}

/// A validation failure tied to the config key that caused it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("`{key}`: {message}")]
pub struct Invalid {
    pub key: String,
    pub message: String,
}

fn invalid(key: &str, message: impl ToString) -> Invalid {
    Invalid { key: key.to_string(), message: message.to_string() }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Parse(#[from] IoError),
    #[error("{path}:{line}: {source}")]
    InFile { path: PathBuf, line: usize, source: Invalid },
    #[error("{0}")]
    Flags(Invalid),
}

impl RunConfig {
    pub fn spec(&self) -> EconomySpec {
        self.economy.spec(self.seed)
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(match self.economy.family {
            Family::McGeography => MC_K,
            Family::Example1 => 10,
            Family::FullSupport | Family::AppendixB => 1000,
        })
    }

    pub fn k_grid(&self) -> Vec<usize> {
        if !self.k_grid.is_empty() {
            return self.k_grid.clone();
        }
        match self.economy.family {
            Family::Example1 => vec![10, 100, 1000],
            Family::AppendixB => vec![2000, 4000, 8000],
            Family::FullSupport | Family::McGeography => vec![500, 2000, 8000],
        }
    }

    /// Checks every parameter the chosen command will read.
    pub fn validate(&self) -> Result<(), Invalid> {
        let family = self.economy.family;
        self.spec().validate().map_err(|e| invalid(if self.economy.capacity_shares.is_some() { "capacity_shares" } else { "economy" }, e))?;
        self.strategy.validate().map_err(|e| match e {
            StrategyError::InvalidParam { name, .. } => invalid(name, e),
            other => invalid("strategy", other),
        })?;
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be at least 1"));
        }
        if self.k == Some(0) {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.n_cutoff_samples == 0 {
            return Err(invalid("n_cutoff_samples", "must be at least 1"));
        }
        if self.reference_seeds == 0 {
            return Err(invalid("reference_seeds", "must be at least 1"));
        }
        let kind = self.strategy.kind;
        let dgp = matches!(kind, StrategyKind::Tt | StrategyKind::Pim | StrategyKind::Prm);
        match self.command {
            Command::Estimate | Command::Counterfactual | Command::Replicate => {
                if family != Family::McGeography {
                    return Err(invalid("family", format!("{:?} needs the MC_GEOGRAPHY family", self.command).to_lowercase()));
                }
                if !dgp {
                    return Err(invalid("kind", "expected TT, PIM or PRM"));
                }
                if self.command == Command::Estimate && self.assumptions.is_empty() {
                    return Err(invalid("assumptions", "need at least one of WTT, STABILITY"));
                }
            }
            Command::Simulate => {
                let ok = match family {
                    Family::McGeography => dgp,
                    Family::Example1 => true,
                    Family::AppendixB => matches!(kind, StrategyKind::Tt | StrategyKind::AppendixB),
                    Family::FullSupport => matches!(kind, StrategyKind::Tt | StrategyKind::Theorem1),
                };
                if !ok {
                    return Err(invalid("kind", format!("{kind:?} reports are not available for {family:?}")));
                }
            }
            Command::Converge => {
                let grid = self.k_grid();
                if grid.contains(&0) || grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("k_grid", "must be positive and strictly increasing"));
                }
                let ok = match family {
                    Family::Example1 => true,
                    Family::AppendixB => kind == StrategyKind::AppendixB,
                    Family::FullSupport | Family::McGeography => matches!(kind, StrategyKind::Tt | StrategyKind::Theorem1),
                };
                if !ok {
                    return Err(invalid("kind", format!("{kind:?} sweeps are not available for {family:?}")));
                }
            }
        }
        Ok(())
    }

    /// Reads a config file. A manifest is accepted too; its `config` entry is used.
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        let value: serde_json::Value = parse_json(path, &text)?;
        let cfg = if value.get("config").is_some() && value.get("files").is_some() {
            serde_json::from_value(value["config"].clone())
                .map_err(|e| IoError::Json { path: path.to_path_buf(), line: 1, column: 1, message: e.to_string() })?
        } else {
            parse_json(path, &text)?
        };
        Ok((cfg, text))
    }
}

/// 1-based line on which `"key"` first appears in `text`.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Turns a validation failure into a diagnostic pointing at the config file
/// when the key came from it.
pub fn locate(err: Invalid, file: Option<(&Path, &str)>) -> ConfigError {
    match file.and_then(|(p, text)| key_line(text, &err.key).map(|line| (p, line))) {
        Some((path, line)) => ConfigError::InFile { path: path.to_path_buf(), line, source: err },
        None => ConfigError::Flags(err),
    }
}
