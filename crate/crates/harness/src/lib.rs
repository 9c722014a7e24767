//! Experiment runner, latency reporting, and the live-session HTTP service.

pub mod config;
pub mod experiment;
pub mod latency;
pub mod service;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, CellReport, ExperimentOutput, ExperimentReport};
pub use latency::{nearest_rank, LatencyReport, LatencyStats};
pub use service::{router, SessionStore};
