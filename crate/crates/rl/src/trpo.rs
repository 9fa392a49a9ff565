//! Trust-region policy step and critic regression.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gae::StepEnd;
use crate::policy::GaussianPolicy;
use crate::value::{Adam, ValueNet};
use qpulse_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub target_kl: f64,
    /// Critic minibatch size.
    pub batch_size: usize,
    /// Transitions collected per environment per iteration.
    pub n_steps: usize,
    pub n_envs: usize,
    pub max_timesteps: u64,
    /// Initial critic learning rate.
    pub lr0: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub line_search_shrink: f64,
    pub line_search_max_backtracks: usize,
    pub value_epochs: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub checkpoint_every: u64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub normalize_advantage: bool,
    /// Evaluations without improvement before stopping (0 disables).
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    /// Consecutive non-finite updates tolerated before training halts.
    pub max_nonfinite_updates: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            target_kl: 0.01,
            batch_size: 128,
            n_steps: 2048,
            n_envs: 4,
            max_timesteps: 20_000_000,
            lr0: 3e-4,
            cg_iters: 10,
            cg_damping: 0.1,
            line_search_shrink: 0.8,
            line_search_max_backtracks: 10,
            value_epochs: 10,
            eval_every: 2048,
            eval_episodes: 10,
            checkpoint_every: 4096,
            hidden: vec![128, 128],
            log_std_init: 0.0,
            normalize_advantage: true,
            plateau_patience: 50,
            plateau_min_delta: 0.01,
            max_nonfinite_updates: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.target_kl > 0.0) {
            return bad("target_kl must be positive");
        }
        if self.batch_size == 0 || self.n_steps == 0 || self.n_envs == 0 || self.value_epochs == 0 {
            return bad("batch_size, n_steps, n_envs and value_epochs must be positive");
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every, checkpoint_every and eval_episodes must be positive");
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) || !(self.lr0 > 0.0) || !(self.cg_damping >= 0.0) {
            return bad("line_search_shrink must lie in (0, 1), lr0 > 0 and cg_damping ≥ 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }

    /// Critic learning rate given the remaining fraction of training.
    pub fn learning_rate(&self, remaining: f64) -> f64 {
        self.lr0 / (1.0 + DECAY * (1.0 - remaining.clamp(0.0, 1.0)))
    }
}

const DECAY: f64 = 2.511_886_431_509_580_3; // 10^0.4

/// 3e-4 / (1 + 10^0.4 · (1 − remaining)).
pub fn lr_schedule(remaining: f64) -> f64 {
    TrainConfig::default().learning_rate(remaining)
}

/// Transitions from all environments, ordered environment by environment.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub observations: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub ends: Vec<StepEnd>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Shifts and scales advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt() + 1e-8;
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves A x = b for symmetric positive definite A given as a product.
pub fn conjugate_gradient<F: Fn(&[f64]) -> Vec<f64>>(apply: F, b: &[f64], iters: usize, tol: f64) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr <= tol {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyUpdateStats {
    pub gradient_norm: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl: f64,
    pub accepted: bool,
    pub backtracks: usize,
    /// The gradient or natural direction was not finite; nothing changed.
    pub nonfinite: bool,
}

fn surrogate(policy: &GaussianPolicy, batch: &RolloutBatch, old_log_probs: &[f64], eval: &crate::policy::PolicyEval) -> f64 {
    let lp = policy.log_probs(eval, &batch.actions);
    let n = batch.len() as f64;
    lp.iter().zip(old_log_probs).zip(&batch.advantages).map(|((l, o), a)| (l - o).exp() * a).sum::<f64>() / n
}

/// One natural-gradient step on the surrogate mean(ratio · advantage),
/// scaled to the KL boundary and shrunk until it improves the surrogate with
/// mean KL(old ‖ new) ≤ target_kl. Parameters are left unchanged otherwise.
pub fn policy_update(policy: &mut GaussianPolicy, batch: &RolloutBatch, config: &TrainConfig) -> PolicyUpdateStats {
    let mut stats = PolicyUpdateStats::default();
    if batch.is_empty() {
        return stats;
    }
    let old_eval = policy.evaluate(&batch.observations);
    let old_log_probs = policy.log_probs(&old_eval, &batch.actions);
    let old_log_std = policy.log_std().clone();
    let n = batch.len() as f64;
    let weights: Vec<f64> = batch.advantages.iter().map(|a| a / n).collect();
    let g = policy.weighted_log_prob_gradient(&old_eval, &batch.actions, &weights);
    stats.gradient_norm = dot(&g, &g).sqrt();
    stats.surrogate_before = batch.advantages.iter().sum::<f64>() / n;
    stats.surrogate_after = stats.surrogate_before;
    if !stats.gradient_norm.is_finite() {
        stats.nonfinite = true;
        log::warn!("policy gradient is not finite; update skipped");
        return stats;
    }
    if stats.gradient_norm == 0.0 {
        return stats;
    }
    let fvp = |v: &[f64]| policy.fisher_vector_product(&old_eval, v, config.cg_damping);
    let direction = conjugate_gradient(fvp, &g, config.cg_iters, 1e-10);
    let shs = dot(&direction, &fvp(&direction));
    let scale = (2.0 * config.target_kl / shs).sqrt();
    if !scale.is_finite() || direction.iter().any(|d| !d.is_finite()) {
        stats.nonfinite = true;
        log::warn!("natural-gradient direction is not finite; update skipped");
        return stats;
    }
    let theta0 = policy.params();
    let mut coef = 1.0;
    for attempt in 0..config.line_search_max_backtracks {
        let theta: Vec<f64> = theta0.iter().zip(&direction).map(|(t, d)| t + coef * scale * d).collect();
        policy.set_params(&theta);
        let eval = policy.evaluate(&batch.observations);
        let kl = policy.kl_from(&old_eval.mean, &old_log_std, &eval);
        let surr = surrogate(policy, batch, &old_log_probs, &eval);
        if kl.is_finite() && kl <= config.target_kl && surr > stats.surrogate_before {
            stats.accepted = true;
            stats.kl = kl;
            stats.surrogate_after = surr;
            stats.backtracks = attempt;
            return stats;
        }
        coef *= config.line_search_shrink;
    }
    policy.set_params(&theta0);
    stats.backtracks = config.line_search_max_backtracks;
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueUpdateStats {
    pub loss_before: f64,
    pub loss_after: f64,
    pub learning_rate: f64,
}

/// Minibatch Adam regression of V(s) onto the returns.
pub fn value_update<R: Rng>(
    value: &mut ValueNet,
    adam: &mut Adam,
    batch: &RolloutBatch,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> ValueUpdateStats {
    let loss_before = value.mse_and_gradient(&batch.observations, &batch.returns).0;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut params = value.params();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let obs = batch.observations.select_columns(chunk.iter());
            let targets: Vec<f64> = chunk.iter().map(|&i| batch.returns[i]).collect();
            let (_, grad) = value.mse_and_gradient(&obs, &targets);
            adam.step(&mut params, &grad, lr);
            value.set_params(&params);
        }
    }
    let loss_after = value.mse_and_gradient(&batch.observations, &batch.returns).0;
    ValueUpdateStats { loss_before, loss_after, learning_rate: lr }
}
