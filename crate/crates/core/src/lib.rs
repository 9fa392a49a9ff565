//! Simulation and control of a two-qutrit, tunable-coupler entangling gate.
//!
//! * [`qdyn`]: Hamiltonian, excitation sectors, Schrödinger and Lindblad propagation.
//! * [`metrics`]: effective logical gate, Weyl-chamber coordinates, concurrence, unitarity, cost.
//! * [`env`]: the episodic pulse-shaping environment.
//! * [`oct`]: gradient-based optimal control and speed-limit sweeps.
//! * [`analysis`]: spectra, filtering, robustness sweeps, noise studies, heatmap tables.

pub mod analysis;
pub mod env;
pub mod error;
pub mod logical;
pub mod metrics;
pub mod oct;
pub mod params;
pub mod pulse;
pub mod qdyn;

pub use error::{Error, Result};
pub use env::{EnvConfig, PulseEnv};
pub use params::{NoiseConfig, SystemParams};
pub use pulse::Pulse;
