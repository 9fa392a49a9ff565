//! TOML configuration with `[system]`, `[env]`, `[train]`, `[oct]` and `[sweep]` tables.
//!
//! Every table and field is optional; missing values take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qpulse_core::analysis::{SweepGrid, SweepMode, DEFAULT_FILTER_CUTOFF};
use qpulse_core::oct::{GuessShape, OptimizerConfig, QslConfig};
use qpulse_core::pulse::DEFAULT_DT;
use qpulse_core::{EnvConfig, Error, NoiseConfig, Result, SystemParams};
use qpulse_rl::{EnvFactory, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub system: SystemParams,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub oct: OctConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OctConfig {
    pub guess: GuessShape,
    /// Pulse duration in ns.
    pub duration: f64,
    pub dt: f64,
    pub optimizer: OptimizerConfig,
    pub qsl: QslConfig,
}

impl Default for OctConfig {
    fn default() -> Self {
        Self {
            guess: GuessShape::flat_top(),
            duration: 50.0,
            dt: DEFAULT_DT,
            optimizer: OptimizerConfig::default(),
            qsl: QslConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Half-width of the frequency grid as a fraction of nominal ω₁, ω₂.
    pub fraction: f64,
    pub resolution: usize,
    /// Explicit ω₁ offsets in MHz; overrides `fraction` and `resolution`.
    pub delta_omega1_mhz: Option<Vec<f64>>,
    pub delta_omega2_mhz: Option<Vec<f64>>,
    /// Final stretch of an episode searched for the best reward in the policy sweep.
    pub terminal_window_ns: f64,
    /// Running-minimum window applied to 1 − U in checkpoint evolution.
    pub min_filter_ns: f64,
    pub filter_cutoff: f64,
    pub levels: Vec<usize>,
    pub noise: NoiseConfig,
    /// Also render heatmaps as PNG.
    pub png: bool,
    pub png_scale: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fraction: 0.01,
            resolution: 11,
            delta_omega1_mhz: None,
            delta_omega2_mhz: None,
            terminal_window_ns: 5.0,
            min_filter_ns: 1.05,
            filter_cutoff: DEFAULT_FILTER_CUTOFF,
            levels: vec![3, 4, 5],
            noise: NoiseConfig::default(),
            png: false,
            png_scale: 8,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self, system: &SystemParams, mode: SweepMode) -> Result<SweepGrid> {
        let mut grid = SweepGrid::fraction_of_nominal(system, self.fraction, self.resolution)?;
        if let Some(d1) = &self.delta_omega1_mhz {
            grid.delta_omega1_mhz = d1.clone();
        }
        if let Some(d2) = &self.delta_omega2_mhz {
            grid.delta_omega2_mhz = d2.clone();
        }
        grid.mode = mode;
        grid.validate()?;
        Ok(grid)
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.env.validate()?;
        self.train.validate()?;
        self.oct.optimizer.validate()?;
        self.sweep.noise.validate()?;
        if !(self.oct.duration > 0.0 && self.oct.dt > 0.0) {
            return Err(Error::InvalidArgument("oct duration and dt must be positive".into()));
        }
        if !(self.sweep.terminal_window_ns > 0.0 && self.sweep.min_filter_ns > 0.0 && self.sweep.filter_cutoff > 0.0) {
            return Err(Error::InvalidArgument("sweep windows and filter cutoff must be positive".into()));
        }
        Ok(())
    }

    /// Routes one seed into every random stream.
    pub fn apply_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.env.seed = seed;
        self.oct.qsl.seed = seed;
    }

    pub fn factory(&self) -> EnvFactory {
        EnvFactory::new(self.system, self.env.clone())
    }
}
