//! Running a policy in the environment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::GaussianPolicy;
use qpulse_core::env::EpisodeLog;
use qpulse_core::{EnvConfig, PulseEnv, Result, SystemParams};

/// Builds identically configured, independent environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFactory {
    pub system: SystemParams,
    pub env: EnvConfig,
}

impl EnvFactory {
    pub fn new(system: SystemParams, env: EnvConfig) -> Self {
        Self { system, env }
    }

    pub fn make(&self) -> Result<PulseEnv> {
        PulseEnv::new(self.system, self.env.clone())
    }
}

/// Maps a normalised policy action to amplitude increments in GHz.
pub fn scale_action(action: &[f64], delta_cap: f64) -> Vec<f64> {
    action.iter().map(|a| delta_cap * a.clamp(-1.0, 1.0)).collect()
}

/// Plays one episode from a reset with `reset_seed`.
pub fn run_episode<R: Rng>(
    policy: &GaussianPolicy,
    env: &mut PulseEnv,
    deterministic: bool,
    reset_seed: u64,
    rng: &mut R,
) -> Result<EpisodeLog> {
    let mut obs = env.reset(Some(reset_seed))?;
    let cap = env.config().delta_cap;
    loop {
        let (action, _) = policy.act(obs.as_slice(), deterministic, rng);
        let result = env.step(&scale_action(&action, cap))?;
        if result.done() {
            return Ok(env.log().clone());
        }
        obs = result.observation;
    }
}

/// Plays `episodes` episodes. Episode `i` draws its reset seed and action
/// noise from stream `i` of a generator seeded with `seed`, so the output
/// does not depend on thread scheduling.
pub fn evaluate(
    policy: &GaussianPolicy,
    factory: &EnvFactory,
    episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<Vec<EpisodeLog>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let reset_seed = rng.random();
            let mut env = factory.make()?;
            run_episode(policy, &mut env, deterministic, reset_seed, &mut rng)
        })
        .collect()
}

/// Averages over evaluation episodes. Gate quantities are taken at the final step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    /// Mean undiscounted episode return.
    pub mean_reward: f64,
    pub mean_step_reward: f64,
    pub mean_cost: f64,
    pub mean_concurrence: f64,
    pub mean_unitarity: f64,
    pub truncations: usize,
}

impl EvalSummary {
    pub fn from_logs(logs: &[EpisodeLog]) -> Self {
        let n = logs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeLog) -> f64| logs.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: logs.len(),
            mean_reward: mean(&|l| l.total_reward()),
            mean_step_reward: mean(&|l| l.total_reward() / l.steps.len() as f64),
            mean_cost: mean(&|l| l.last().map_or(f64::NAN, |s| s.cost)),
            mean_concurrence: mean(&|l| l.last().map_or(f64::NAN, |s| s.concurrence)),
            mean_unitarity: mean(&|l| l.last().map_or(f64::NAN, |s| s.unitarity)),
            truncations: logs.iter().filter(|l| l.truncated()).count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(seed: u64) -> (GaussianPolicy, EnvFactory) {
        let factory = EnvFactory::new(SystemParams::default(), EnvConfig::default());
        let env = factory.make().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (GaussianPolicy::new(env.observation_dim(), env.action_dim(), &[32, 32], 0.0, &mut rng), factory)
    }

    #[test]
    fn untrained_deterministic_episode_is_valid() {
        let (p, f) = policy(1);
        let logs = evaluate(&p, &f, 2, true, 5).unwrap();
        assert_eq!(logs.len(), 2);
        assert_eq!(logs[0], logs[1]);
        let log = &logs[0];
        assert!(log.steps.iter().all(|s| s.reward.is_finite()));
        assert_eq!(log.steps.len(), f.env.episode_steps());
        let s = EvalSummary::from_logs(&logs);
        assert!((s.mean_reward - log.total_reward()).abs() < 1e-12);
        assert_eq!(s.truncations, 0);
    }

    #[test]
    fn stochastic_episodes_are_distinct() {
        let (p, f) = policy(2);
        let logs = evaluate(&p, &f, 10, false, 7).unwrap();
        for i in 0..logs.len() {
            for j in 0..i {
                assert_ne!(logs[i].amplitudes, logs[j].amplitudes);
            }
        }
        assert_eq!(logs, evaluate(&p, &f, 10, false, 7).unwrap());
    }

    #[test]
    fn scaling_clips_to_cap() {
        assert_eq!(scale_action(&[2.0, -0.5, -3.0], 0.2), vec![0.2, -0.1, -0.2]);
    }
}
