use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceRegistration {
    pub space_id: String,
    pub terminal_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub persistence_window_ms: u64,
    pub persistence_reports: u32,
    pub rate_per_minute: f64,
    pub heartbeat_interval_ms: u64,
    pub offline_after_missed: u64,
    pub illegal_parking_grace_ms: u64,
    /// Accept unknown spaces on their first heartbeat.
    pub register_on_heartbeat: bool,
    pub spaces: Vec<SpaceRegistration>,
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig {
            persistence_window_ms: 10_000,
            persistence_reports: 2,
            rate_per_minute: 0.05,
            heartbeat_interval_ms: 30_000,
            offline_after_missed: 3,
            illegal_parking_grace_ms: 300_000,
            register_on_heartbeat: true,
            spaces: Vec::new(),
        }
    }
}

impl CloudConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: CloudConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.persistence_reports == 0 {
            return Err(ConfigError::Invalid("persistence_reports must be at least 1".into()));
        }
        if self.heartbeat_interval_ms == 0 {
            return Err(ConfigError::Invalid("heartbeat_interval_ms must be positive".into()));
        }
        if self.offline_after_missed == 0 {
            return Err(ConfigError::Invalid("offline_after_missed must be positive".into()));
        }
        if !self.rate_per_minute.is_finite() || self.rate_per_minute < 0.0 {
            return Err(ConfigError::Invalid("rate_per_minute must be finite and nonnegative".into()));
        }
        Ok(())
    }
}
