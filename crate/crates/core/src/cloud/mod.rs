//! Business service: idempotent per-space state, billing, alarms and node
//! health, with an append-only input log and an HTTP API.

pub mod config;
pub mod eventlog;
pub mod http;
pub mod model;
pub mod service;

use thiserror::Error;

use crate::protocol::SchemaError;

pub use config::{CloudConfig, SpaceRegistration};
pub use eventlog::{parse_jsonl, read_log, to_jsonl, EventLog, FileLog, LogEntry, LogError, MemoryLog};
pub use model::{
    Alarm, AlarmAction, AlarmState, BusinessSpaceRecord, CloudAlarmKind, NodeHealth, NodeStatus, Order, OrderingKey,
    PendingOccupancy,
};
pub use service::{
    BusinessState, CloudMetrics, CloudService, Counters, Effect, LatencyStats, Outcome, SpaceDetail, SpaceSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("unknown space {0}")]
    UnknownSpace(String),
    #[error("space {space} is registered to terminal {expected}, not {got}")]
    TerminalMismatch { space: String, expected: String, got: String },
    #[error("unknown alarm {0}")]
    UnknownAlarm(String),
    #[error("order {0} is already closed")]
    OrderClosed(String),
    #[error("alarm {alarm}: cannot {action:?} from {from:?}")]
    IllegalTransition { alarm: String, from: AlarmState, action: AlarmAction },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("expected {expected} message, got {got}")]
    WrongType { expected: &'static str, got: &'static str },
    #[error("event log write failed: {0}")]
    Log(String),
}
