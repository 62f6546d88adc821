//! Scenario simulator: sensor models, fusion nodes, the gateway and a cloud
//! endpoint driven over simulated time.

pub mod endpoint;
pub mod fixture;
pub mod gateway;
pub mod metrics;
pub mod runner;
pub mod scenario;

pub use endpoint::{CloudEndpoint, CloudSnapshot, Delivery, EmbeddedCloud, EndpointError, HttpCloud};
pub use fixture::load_fixture;
pub use gateway::{gateway_bridge, DeliveryStats, Gateway};
pub use metrics::{CloudTotals, Confusion, MessageCounters, MetricsReport, SpaceMetrics};
pub use runner::{derive_seed, run, RunOptions, RunOutput, SensorModel, SimError, Simulation, Trace};
pub use scenario::{DetectorOverride, EventKind, Scenario, ScenarioError, ScenarioEvent, SpaceSpec};
