//! Orchestration behind the `qpulse` command: configuration, policy sweeps,
//! checkpoint-evolution heatmaps and subcommand dispatch.

pub mod cli;
pub mod config;
pub mod evolution;
pub mod policy_sweep;

pub use config::AppConfig;
