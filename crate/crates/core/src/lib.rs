//! Simulated parking-barrier system: IR, vision and inertial sensing fused on
//! edge nodes, a framed telemetry protocol, and a cloud business service.

pub mod cloud;
pub mod config;
pub mod detection;
pub mod error;
pub mod fusion;
pub mod inertial;
pub mod ir;
pub mod power;
pub mod protocol;
pub mod sim;
