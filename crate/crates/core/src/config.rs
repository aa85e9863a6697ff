//! Versioned JSON run configuration for the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cases::CaseOverrides;
use crate::network::{Arch, NetworkConfig};
use crate::sampler::SamplerConfig;
use crate::training::{LossWeights, TrainSchedule};

pub const CONFIG_SCHEMA: &str = "rapinn-run/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("config {path}: unsupported schema `{found}` (expected `{CONFIG_SCHEMA}`)")]
    Schema { path: PathBuf, found: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema: String,
    pub case: u8,
    pub model: Arch,
    pub network: NetworkConfig,
    pub sampler: SamplerConfig,
    pub weights: LossWeights,
    pub schedule: TrainSchedule,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub deterministic: bool,
    pub case_overrides: Option<CaseOverrides>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA.to_string(),
            case: 1,
            model: Arch::RaPinn,
            network: NetworkConfig::new(Arch::RaPinn, 64, 4, 0),
            sampler: SamplerConfig::default(),
            weights: LossWeights::default(),
            schedule: TrainSchedule::default(),
            out_dir: PathBuf::from("runs"),
            seed: 0,
            deterministic: false,
            case_overrides: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(ConfigError::Schema { path: path.to_path_buf(), found: cfg.schema });
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
    }

    /// Hard validation errors plus soft cross-field warnings (reported, never
    /// silently fixed).
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(1..=4).contains(&self.case) {
            return Err(ConfigError::Invalid(format!("case {} outside 1..=4", self.case)));
        }
        self.network
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("network: {e}")))?;
        if self.network.arch != self.model {
            return Err(ConfigError::Invalid(format!(
                "model flag `{}` disagrees with network.arch `{}`",
                self.model, self.network.arch
            )));
        }
        for (name, v) in [
            ("lambda_res", self.weights.lambda_res),
            ("lambda_b", self.weights.lambda_b),
            ("lambda_data", self.weights.lambda_data),
            ("lambda_reg", self.weights.lambda_reg),
            ("lambda_gauge", self.weights.lambda_gauge),
            ("lambda_gamma", self.weights.lambda_gamma),
        ] {
            if !(v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} = {v} must be nonnegative")));
            }
        }
        if self.sampler.n_interior == 0 || self.sampler.pool_size < self.sampler.n_interior {
            return Err(ConfigError::Invalid(
                "sampler needs n_interior >= 1 and pool_size >= n_interior".into(),
            ));
        }

        let mut warnings = Vec::new();
        if self.case != 2 && self.weights.lambda_gauge != LossWeights::default().lambda_gauge {
            warnings.push(format!(
                "lambda_gauge = {} has no effect: the gauge channel is only active for case 2",
                self.weights.lambda_gauge
            ));
        }
        if self.case != 4 && self.weights.lambda_gamma != LossWeights::default().lambda_gamma {
            warnings.push(format!(
                "lambda_gamma = {} has no effect: the interface channel is only active for case 4",
                self.weights.lambda_gamma
            ));
        }
        if self.case != 4 && self.sampler.n_interface != SamplerConfig::default().n_interface {
            warnings.push("n_interface is ignored for cases without an interface".into());
        }
        Ok(warnings)
    }

    /// Run tag used for artifact naming.
    pub fn tag(&self) -> String {
        format!("case{}_{}_seed{}", self.case, self.model, self.seed)
    }
}
