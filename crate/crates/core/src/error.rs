use thiserror::Error;

/// Configuration problems are reported when a config is loaded, never at
/// query time.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed IR calibration: {0}")]
    Calibration(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read configuration: {0}")]
    Parse(String),
}
