//! Merged pipeline configuration, loadable from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defects::RuleConfig;
use crate::muis::MuisConfig;
use crate::similarity::SimilarityConfig;
use crate::slic::SlicConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Every tunable of the pipeline. TOML layout:
///
/// ```toml
/// seed = 0
/// [slic]
/// k_init = 1000
/// [muis]
/// channels = 100
/// [similarity]
/// gamma = 0.5
/// [rules]
/// tau_complete = 0.8
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    pub slic: SlicConfig,
    pub muis: MuisConfig,
    pub similarity: SimilarityConfig,
    pub rules: RuleConfig,
}

impl GlobalConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.slic.validate().map_err(|e| invalid(&e))?;
        self.muis.validate().map_err(|e| invalid(&e))?;
        self.similarity.validate().map_err(|e| invalid(&e))?;
        self.rules.validate().map_err(|e| invalid(&e))?;
        Ok(())
    }

    /// Network settings with the global seed applied.
    pub fn muis_config(&self) -> MuisConfig {
        MuisConfig {
            seed: self.seed,
            ..self.muis.clone()
        }
    }
}
