//! Experiment orchestration: configuration, scenarios, persistence and the
//! acceptance suite.

pub mod analysis;
pub mod config;
pub mod scenario;
pub mod persist;
pub mod suite;
