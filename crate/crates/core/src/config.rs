//! Node configuration file (TOML).
//!
//! ```toml
//! [fusion]
//! mode = "no_inertial"
//!
//! [detector]
//! conf_threshold = 0.3
//! ```

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::DetectorConfig;
use crate::error::ConfigError;
use crate::fusion::FusionSettings;
use crate::inertial::InertialSettings;
use crate::ir::{IrCalibration, IrSettings};
use crate::power::PowerModel;
use crate::protocol::DEFAULT_MAX_PAYLOAD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeConfig {
    pub calibration: IrCalibration,
    pub ir: IrSettings,
    pub inertial: InertialSettings,
    pub detector: DetectorConfig,
    pub fusion: FusionSettings,
    pub power: PowerModel,
    pub max_payload: usize,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            calibration: IrCalibration::default(),
            ir: IrSettings::default(),
            inertial: InertialSettings::default(),
            detector: DetectorConfig::default(),
            fusion: FusionSettings::default(),
            power: PowerModel::default(),
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: NodeConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.detector.validate()?;
        self.power.validate()?;
        if self.ir.release_cm.partial_cmp(&self.ir.trigger_cm) != Some(Ordering::Greater) {
            return Err(ConfigError::Invalid("ir.release_cm must exceed ir.trigger_cm".into()));
        }
        if self.ir.window == 0 {
            return Err(ConfigError::Invalid("ir.window must be at least 1".into()));
        }
        let f = &self.fusion;
        if f.max_failed_confirms == 0 || f.vacate_polls == 0 {
            return Err(ConfigError::Invalid("fusion counters must be at least 1".into()));
        }
        if f.idle_poll_ms == 0 || f.occupied_poll_ms == 0 {
            return Err(ConfigError::Invalid("poll periods must be positive".into()));
        }
        if !(f.occupancy_threshold > 0.0 && f.occupancy_threshold < 1.0) {
            return Err(ConfigError::Invalid("fusion.occupancy_threshold must be in (0, 1)".into()));
        }
        if self.inertial.lookback_ms == 0 {
            return Err(ConfigError::Invalid("inertial.lookback_ms must be positive".into()));
        }
        Ok(())
    }
}
