use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heatmap::{HeatmapTable, ValueSemantics};
use crate::error::{Error, Result};
use crate::metrics::GateMetrics;
use crate::oct::ControlProblem;
use crate::params::SystemParams;
use crate::pulse::Pulse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// One static pulse evaluated under every perturbation.
    #[default]
    FixedPulse,
    /// A fresh pulse generated by the policy for every perturbation.
    Policy,
}

/// Offsets of ω₁ (rows) and ω₂ (columns) in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub delta_omega1_mhz: Vec<f64>,
    pub delta_omega2_mhz: Vec<f64>,
    pub mode: SweepMode,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self::fraction_of_nominal(&SystemParams::default(), 0.01, 11).expect("default grid is valid")
    }
}

fn linspace(max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| max * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect()
}

impl SweepGrid {
    /// `resolution` evenly spaced offsets in [−max, max] on each axis.
    pub fn uniform(max1_mhz: f64, max2_mhz: f64, resolution: usize) -> Result<Self> {
        if resolution == 0 || !(max1_mhz >= 0.0) || !(max2_mhz >= 0.0) {
            return Err(Error::InvalidArgument("grid needs a positive resolution and non-negative extents".into()));
        }
        Ok(Self { delta_omega1_mhz: linspace(max1_mhz, resolution), delta_omega2_mhz: linspace(max2_mhz, resolution), mode: SweepMode::FixedPulse })
    }

    /// Offsets up to ±fraction of the nominal ω₁, ω₂.
    pub fn fraction_of_nominal(params: &SystemParams, fraction: f64, resolution: usize) -> Result<Self> {
        Self::uniform(params.omega1 * fraction * 1000.0, params.omega2 * fraction * 1000.0, resolution)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.delta_omega1_mhz.iter().chain(&self.delta_omega2_mhz);
        if self.delta_omega1_mhz.is_empty() || self.delta_omega2_mhz.is_empty() || all.clone().any(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("sweep offsets must be finite and non-empty".into()));
        }
        Ok(())
    }

    /// True if every offset stays within ±fraction of its nominal frequency.
    pub fn within_fraction(&self, params: &SystemParams, fraction: f64) -> bool {
        let ok = |ds: &[f64], w: f64| ds.iter().all(|d| d.abs() <= fraction * w * 1000.0 * (1.0 + 1e-12));
        ok(&self.delta_omega1_mhz, params.omega1) && ok(&self.delta_omega2_mhz, params.omega2)
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        let n2 = self.delta_omega2_mhz.len();
        (0..self.delta_omega1_mhz.len()).flat_map(|i| (0..n2).map(move |j| (i, j))).collect()
    }

    pub fn empty_table(&self, semantics: ValueSemantics) -> Result<HeatmapTable> {
        HeatmapTable::new(
            semantics,
            "delta_omega1_mhz",
            self.delta_omega1_mhz.clone(),
            "delta_omega2_mhz",
            self.delta_omega2_mhz.clone(),
        )
    }
}

/// Gate metrics of a pulse on the given system.
pub fn evaluate_pulse(params: &SystemParams, pulse: &Pulse) -> Result<GateMetrics> {
    ControlProblem::new(params, pulse.dt())?.metrics(pulse.amplitudes())
}

/// log₁₀ J_T of a fixed pulse over the perturbation grid; cells are
/// independent and evaluated in parallel.
pub fn robustness_sweep(params: &SystemParams, pulse: &Pulse, grid: &SweepGrid) -> Result<HeatmapTable> {
    grid.validate()?;
    let cells = grid.cells();
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = params.perturbed_mhz(grid.delta_omega1_mhz[i], grid.delta_omega2_mhz[j]);
            evaluate_pulse(&p, pulse).ok().map(|m| m.cost.log10())
        })
        .collect();
    let mut table = grid.empty_table(ValueSemantics::Log10Cost)?.with_metadata("mode", "fixed_pulse");
    for (&(i, j), v) in cells.iter().zip(values) {
        table.set(i, j, v);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        let g = SweepGrid::uniform(2.0, 1.0, 5).unwrap();
        assert_eq!(g.delta_omega1_mhz, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(g.delta_omega2_mhz[2], 0.0);
        assert_eq!(g.cells().len(), 25);
        let d = SweepGrid::default();
        assert!(d.within_fraction(&SystemParams::default(), 0.01));
        assert!(!d.within_fraction(&SystemParams::default(), 0.005));
        assert!(SweepGrid::uniform(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn origin_cell_is_direct_evaluation() {
        let params = SystemParams::default();
        let pulse = Pulse::new(0.05, (0..80).map(|k| 0.6 * (0.3 * k as f64).sin()).collect()).unwrap();
        let grid = SweepGrid::uniform(3.0, 3.0, 3).unwrap();
        let table = robustness_sweep(&params, &pulse, &grid).unwrap();
        let direct = evaluate_pulse(&params, &pulse).unwrap().cost.log10();
        assert_eq!(table.get(1, 1), Some(direct));
        assert!(table.get(0, 0) != table.get(2, 2));
    }
}
