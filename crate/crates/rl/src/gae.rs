//! Generalised advantage estimation.

use qpulse_core::{Error, Result};

/// How a transition ends in the rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEnd {
    /// The next transition in the sequence continues the same episode.
    Continue,
    /// The episode ended; the successor value is zero.
    Terminal,
    /// The sequence stops mid-episode; bootstrap from this value.
    Cut(f64),
}

/// GAE-λ advantages and returns (advantage + value) for one ordered
/// sequence of transitions. The last entry must not be `Continue`.
pub fn compute_gae(rewards: &[f64], values: &[f64], ends: &[StepEnd], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || ends.len() != n {
        return Err(Error::InvalidArgument("rewards, values and ends must have equal length".into()));
    }
    if ends.last() == Some(&StepEnd::Continue) {
        return Err(Error::InvalidArgument("sequence must end with a terminal or a cut".into()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = match ends[t] {
            StepEnd::Continue => (values[t + 1], 1.0),
            StepEnd::Terminal => (0.0, 0.0),
            StepEnd::Cut(v) => (v, 0.0),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
