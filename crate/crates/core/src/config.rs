//! TOML run configuration with one table per component.
//!
//! ```toml
//! [trainer]
//! beta = 0.01
//! use_icm = true
//!
//! [reward]
//! lambda_i = 1.0
//!
//! [icm]
//! lambda_f = 0.2
//! ```
//!
//! Omitted tables and keys take their defaults; unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::EpisodeConfig;
use crate::icm::IcmConfig;
use crate::policy::NetworkConfig;
use crate::rewards::RewardParams;
use crate::trainer::TrainerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub reward: RewardParams,
    pub network: NetworkConfig,
    pub icm: IcmConfig,
    pub episode: EpisodeConfig,
}


impl RunConfig {
    /// One of the four exploration presets with every other value at its default.
    pub fn preset(name: &str) -> Option<Self> {
        Some(RunConfig {
            trainer: TrainerConfig::preset(name)?,
            ..RunConfig::default()
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate().map_err(ConfigError::Invalid)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        fn tag(section: &'static str) -> impl Fn(String) -> String {
            move |e| format!("[{section}] {e}")
        }
        self.trainer.validate().map_err(tag("trainer"))?;
        self.reward.validate().map_err(tag("reward"))?;
        self.network.validate().map_err(tag("network"))?;
        self.icm.validate().map_err(tag("icm"))?;
        self.episode.validate().map_err(tag("episode"))?;
        Ok(())
    }
}
