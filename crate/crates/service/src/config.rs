use std::path::{Path, PathBuf};

use rogue_core::collective::AlertThresholds;
use rogue_core::engine::EngineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PORT_ENV: &str = "ROGUE_PORT";
pub const EPISODE_LOG_ENV: &str = "ROGUE_EPISODE_LOG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{var}={value} is not a valid port")]
    Port { var: &'static str, value: String },
    #[error("invalid engine configuration: {0}")]
    Engine(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub port: u16,
    /// JSON Lines episode log; episodes are kept in memory only when unset.
    pub episode_log: Option<PathBuf>,
    pub engine: EngineConfig,
    /// Deployment salt for actor hashes in collective signatures.
    pub salt: String,
    pub min_actors: usize,
    pub alerts: AlertThresholds,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            episode_log: None,
            engine: EngineConfig::default(),
            salt: "change-me".to_owned(),
            min_actors: 3,
            alerts: AlertThresholds::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                    path: p.to_path_buf(),
                    source,
                })?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.engine.window.check().map_err(|e| ConfigError::Engine(e.to_string()))?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get(PORT_ENV) {
            self.port = v.parse().map_err(|_| ConfigError::Port { var: PORT_ENV, value: v })?;
        }
        if let Some(v) = get(EPISODE_LOG_ENV) {
            self.episode_log = Some(PathBuf::from(v));
        }
        Ok(())
    }
}
