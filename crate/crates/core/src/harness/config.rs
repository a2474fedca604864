use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::episode::{BeliefConfig, LoopConfig, DEFAULT_MARGIN, DEFAULT_MAX_ITERATIONS};
use crate::error::{ConfigError, Error, Result};
use crate::planner::{ActionSet, PolicyKind, RewardConfig, TrainConfig};
use crate::replay::{DEFAULT_BITS, DEFAULT_K};
use crate::sbow::DEFAULT_BIN_WIDTH;
use crate::world::{DomainShiftParams, WorldConfig};

/// One train/test domain combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pairing {
    /// Used in artifact directory names and report rows.
    pub id: String,
    pub train_shift: DomainShiftParams,
    pub test_shift: DomainShiftParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub pairings: Vec<Pairing>,
    #[serde(default)]
    pub actions: ActionSet,
    #[serde(default)]
    pub rewards: RewardConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub belief: BeliefConfig,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_codebook_size")]
    pub codebook_size: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width: u32,
    /// Results kept per lookup-table row.
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    /// Bits per quantized similarity.
    #[serde(rename = "B", default = "default_bits")]
    pub bits: u8,
    pub episodes_train: usize,
    pub episodes_eval: usize,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    /// Noisy moves per viewpoint and candidate when learning step constants.
    #[serde(default = "default_constant_trials")]
    pub constant_trials: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_codebook_size() -> usize {
    crate::detector::DEFAULT_CODEBOOK_SIZE
}
fn default_bin_width() -> u32 {
    DEFAULT_BIN_WIDTH
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_bits() -> u8 {
    DEFAULT_BITS
}
fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}
fn default_constant_trials() -> usize {
    10
}

fn nested(prefix: &str, e: ConfigError) -> ConfigError {
    ConfigError::new(format!("{prefix}.{}", e.field), e.reason)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file; unreadable files are config errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Ok(Self::from_json(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate().map_err(|e| nested("world", e))?;
        if self.pairings.is_empty() {
            return Err(ConfigError::new("pairings", "at least one pairing required"));
        }
        let mut ids = HashSet::new();
        for (i, p) in self.pairings.iter().enumerate() {
            let valid_id = !p.id.is_empty()
                && p.id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_id {
                return Err(ConfigError::new(
                    format!("pairings[{i}].id"),
                    "must be nonempty [A-Za-z0-9_-]",
                ));
            }
            if !ids.insert(p.id.as_str()) {
                return Err(ConfigError::new(
                    format!("pairings[{i}].id"),
                    format!("duplicate id `{}`", p.id),
                ));
            }
            p.train_shift
                .validate()
                .map_err(|e| nested(&format!("pairings[{i}].train_shift"), e))?;
            p.test_shift
                .validate()
                .map_err(|e| nested(&format!("pairings[{i}].test_shift"), e))?;
        }
        ActionSet::new(self.actions.steps().to_vec())?;
        self.loop_config().validate()?;
        for (name, a) in [("train.alpha", self.train.alpha), ("train.alpha_end", self.train.alpha_end)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ConfigError::new(name, "must be in (0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.train.gamma) {
            return Err(ConfigError::new("train.gamma", "must be in [0, 1)"));
        }
        if !(self.train.temperature_start > 0.0 && self.train.temperature_end > 0.0) {
            return Err(ConfigError::new("train.temperature", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::new("max_iterations", "must be >= 1"));
        }
        if self.codebook_size == 0 {
            return Err(ConfigError::new("codebook_size", "must be >= 1"));
        }
        if self.bin_width == 0 {
            return Err(ConfigError::new("bin_width", "must be >= 1"));
        }
        if self.k == 0 {
            return Err(ConfigError::new("K", "must be >= 1"));
        }
        if !(1..=16).contains(&self.bits) {
            return Err(ConfigError::new("B", "must be in 1..=16"));
        }
        if self.episodes_eval == 0 {
            return Err(ConfigError::new("episodes_eval", "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::new("policies", "at least one policy required"));
        }
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            margin: self.margin,
            max_iterations: self.max_iterations,
            belief: self.belief,
        }
    }
}

/// Parse a comma-separated policy list such as `learned,oracle`.
pub fn parse_policies(list: &str) -> Result<Vec<PolicyKind>> {
    let mut out: Vec<PolicyKind> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: PolicyKind = item.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(ConfigError::new("policies", "empty list")));
    }
    Ok(out)
}
