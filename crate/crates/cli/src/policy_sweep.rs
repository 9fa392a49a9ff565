//! Policy-generated pulses under shifted qubit frequencies.
//!
//! Every cell instantiates the environment with ω₁ + Δω₁, ω₂ + Δω₂ (no
//! domain randomisation), plays one deterministic episode and reports the
//! best per-step reward inside the final window of the episode together
//! with 1 − C and 1 − U at that step.

use std::io::Write;

use rayon::prelude::*;

use qpulse_core::analysis::{HeatmapTable, SweepGrid, ValueSemantics};
use qpulse_core::env::EpisodeLog;
use qpulse_core::Result;
use qpulse_rl::{evaluate, EnvFactory, GaussianPolicy};

/// Smallest 1 − C kept before taking log₁₀.
pub const LOG_FLOOR: f64 = 1e-16;

pub struct PolicySweep {
    pub reward: HeatmapTable,
    pub one_minus_concurrence: HeatmapTable,
    pub one_minus_unitarity: HeatmapTable,
    /// Episode of every cell in row-major order.
    pub episodes: Vec<EpisodeLog>,
    pub grid: SweepGrid,
}

/// Step index of the largest reward among steps ending within
/// `window_ns` of the episode's last step.
pub fn terminal_window_best(log: &EpisodeLog, window_ns: f64) -> Option<usize> {
    let end = log.last()?.t_ns;
    log.steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.t_ns >= end - window_ns - 1e-9)
        .max_by(|a, b| a.1.reward.total_cmp(&b.1.reward))
        .map(|(i, _)| i)
}

/// The nominal environment of a factory with randomisation switched off.
pub fn nominal_factory(factory: &EnvFactory) -> EnvFactory {
    let mut f = factory.clone();
    f.env.randomization = 0.0;
    f
}

pub fn policy_sweep(policy: &GaussianPolicy, factory: &EnvFactory, grid: &SweepGrid, window_ns: f64, seed: u64) -> Result<PolicySweep> {
    grid.validate()?;
    let nominal = nominal_factory(factory);
    let cells = grid.cells();
    let episodes: Vec<EpisodeLog> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut f = nominal.clone();
            f.system = f.system.perturbed_mhz(grid.delta_omega1_mhz[i], grid.delta_omega2_mhz[j]);
            Ok(evaluate(policy, &f, 1, true, seed)?.remove(0))
        })
        .collect::<Result<_>>()?;

    let annotate = |t: HeatmapTable| {
        t.with_metadata("mode", "policy")
            .with_metadata("reduction", "max_step_reward_in_terminal_window")
            .with_metadata("terminal_window_ns", window_ns)
            .with_metadata("seed", seed)
    };
    let mut reward = annotate(grid.empty_table(ValueSemantics::Reward)?);
    let mut one_minus_c =
        annotate(grid.empty_table(ValueSemantics::Log10OneMinusConcurrence)?).with_metadata("log_floor", LOG_FLOOR);
    let mut one_minus_u = annotate(grid.empty_table(ValueSemantics::OneMinusUnitarity)?);
    for (&(i, j), log) in cells.iter().zip(&episodes) {
        if let Some(k) = terminal_window_best(log, window_ns) {
            let s = &log.steps[k];
            reward.set(i, j, Some(s.reward));
            one_minus_c.set(i, j, Some((1.0 - s.concurrence).max(LOG_FLOOR).log10()));
            one_minus_u.set(i, j, Some(1.0 - s.unitarity));
        }
    }
    Ok(PolicySweep { reward, one_minus_concurrence: one_minus_c, one_minus_unitarity: one_minus_u, episodes, grid: grid.clone() })
}

impl PolicySweep {
    /// Full per-step series of every cell.
    pub fn write_series_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d_omega1_mhz,d_omega2_mhz,step,t_ns,reward,C,U,J_T,truncated")?;
        for (&(i, j), log) in self.grid.cells().iter().zip(&self.episodes) {
            let (d1, d2) = (self.grid.delta_omega1_mhz[i], self.grid.delta_omega2_mhz[j]);
            for s in &log.steps {
                writeln!(
                    w,
                    "{d1},{d2},{},{},{},{},{},{},{}",
                    s.step, s.t_ns, s.reward, s.concurrence, s.unitarity, s.cost, u8::from(s.truncated)
                )?;
            }
        }
        Ok(())
    }
}
