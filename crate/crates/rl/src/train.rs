//! The training loop: parallel rollouts, updates, evaluation and checkpoints.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint, CHECKPOINT_FORMAT_VERSION};
use crate::evaluate::{evaluate, scale_action, EnvFactory, EvalSummary};
use crate::gae::{compute_gae, StepEnd};
use crate::policy::GaussianPolicy;
use crate::trpo::{policy_update, value_update, PolicyUpdateStats, RolloutBatch, TrainConfig, ValueUpdateStats};
use crate::value::{Adam, ValueNet};
use qpulse_core::{Error, PulseEnv, Result};

pub const METRICS_HEADER: &str = "global_step,mean_reward,mean_JT,mean_C,mean_U";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub global_step: u64,
    /// Number of policy updates applied before this evaluation.
    pub policy_version: u64,
    pub summary: EvalSummary,
}

impl EvalRecord {
    pub fn csv_line(&self) -> String {
        let s = &self.summary;
        format!("{},{},{},{},{}", self.global_step, s.mean_reward, s.mean_cost, s.mean_concurrence, s.mean_unitarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub global_step: u64,
    /// Location of the saved file; the CLI report stores it relative to the output directory.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub global_step: u64,
    pub policy: PolicyUpdateStats,
    pub value: ValueUpdateStats,
    pub episodes_finished: usize,
    pub mean_episode_return: Option<f64>,
    pub truncations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxTimesteps,
    Plateau,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub global_step: u64,
    pub stop_reason: StopReason,
    pub evaluations: Vec<EvalRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub iterations: Vec<IterationStats>,
}

/// Where to write artefacts and how to interrupt a run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `metrics.csv`, `checkpoints/` and, on failure, `diagnostic.json`.
    pub out_dir: Option<PathBuf>,
    pub stop: Option<Arc<AtomicBool>>,
}

struct Worker {
    env: PulseEnv,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
}

#[derive(Default)]
struct Segment {
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    ends: Vec<StepEnd>,
    returns: Vec<f64>,
    truncations: usize,
}

impl Worker {
    fn new(factory: &EnvFactory, mut rng: ChaCha8Rng) -> Result<Self> {
        let mut env = factory.make()?;
        let obs = env.reset(Some(rng.random()))?.0;
        Ok(Self { env, rng, obs })
    }

    fn collect(&mut self, policy: &GaussianPolicy, value: &ValueNet, n: usize) -> Result<Segment> {
        let mut seg = Segment::default();
        let cap = self.env.config().delta_cap;
        for t in 0..n {
            let (action, logp) = policy.act(&self.obs, false, &mut self.rng);
            seg.values.push(value.predict_one(&self.obs));
            seg.obs.extend_from_slice(&self.obs);
            seg.actions.extend_from_slice(&action);
            seg.log_probs.push(logp);
            let result = self.env.step(&scale_action(&action, cap))?;
            seg.rewards.push(result.reward);
            if result.done() {
                seg.ends.push(StepEnd::Terminal);
                seg.returns.push(self.env.log().total_reward());
                seg.truncations += usize::from(result.truncated);
                self.obs = self.env.reset(Some(self.rng.random()))?.0;
            } else {
                self.obs = result.observation.0;
                seg.ends.push(if t + 1 == n { StepEnd::Cut(value.predict_one(&self.obs)) } else { StepEnd::Continue });
            }
        }
        Ok(seg)
    }
}

pub struct Trainer {
    config: TrainConfig,
    factory: EnvFactory,
    policy: GaussianPolicy,
    value: ValueNet,
    adam: Adam,
    rng: ChaCha8Rng,
    workers: Vec<Worker>,
    global_step: u64,
    policy_version: u64,
    cached_eval: Option<(u64, EvalSummary)>,
    best_eval: f64,
    stale_evals: usize,
    nonfinite_streak: usize,
}

/// Seed of the fixed evaluation episodes, distinct from the training streams.
pub fn evaluation_seed(seed: u64) -> u64 {
    seed ^ 0x0e7a_1000_0000_0001
}

impl Trainer {
    /// Fresh networks; the learner uses stream 0 of the seeded generator and
    /// environment worker `i` uses stream `i + 1`.
    pub fn new(config: TrainConfig, factory: EnvFactory) -> Result<Self> {
        config.validate()?;
        factory.env.validate()?;
        let stream = |i: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(i);
            r
        };
        let mut rng = stream(0);
        let obs_dim = factory.env.observation_dim();
        let policy = GaussianPolicy::new(obs_dim, factory.env.substeps, &config.hidden, config.log_std_init, &mut rng);
        let value = ValueNet::new(obs_dim, &config.hidden, &mut rng);
        let adam = Adam::new(value.num_params());
        let workers = (0..config.n_envs as u64).map(|i| Worker::new(&factory, stream(i + 1))).collect::<Result<_>>()?;
        Ok(Self::assemble(config, factory, policy, value, adam, rng, workers, 0))
    }

    /// Continues from a checkpoint. Episodes in flight when it was written
    /// are not stored; every worker starts a new episode.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.worker_rngs.len() != ckpt.train.n_envs {
            return Err(Error::Parse("checkpoint worker count does not match n_envs".into()));
        }
        let factory = ckpt.factory();
        let workers = ckpt.worker_rngs.into_iter().map(|r| Worker::new(&factory, r)).collect::<Result<_>>()?;
        Ok(Self::assemble(ckpt.train, factory, ckpt.policy, ckpt.value, ckpt.adam, ckpt.learner_rng, workers, ckpt.collected_steps))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: TrainConfig,
        factory: EnvFactory,
        policy: GaussianPolicy,
        value: ValueNet,
        adam: Adam,
        rng: ChaCha8Rng,
        workers: Vec<Worker>,
        global_step: u64,
    ) -> Self {
        Self {
            config,
            factory,
            policy,
            value,
            adam,
            rng,
            workers,
            global_step,
            policy_version: 0,
            cached_eval: None,
            best_eval: f64::NEG_INFINITY,
            stale_evals: 0,
            nonfinite_streak: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn factory(&self) -> &EnvFactory {
        &self.factory
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn value(&self) -> &ValueNet {
        &self.value
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn checkpoint(&self, global_step: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            global_step,
            collected_steps: self.global_step,
            config_hash: config_hash(&self.config, &self.factory.env, &self.factory.system),
            train: self.config.clone(),
            env: self.factory.env.clone(),
            system: self.factory.system,
            policy: self.policy.clone(),
            value: self.value.clone(),
            adam: self.adam.clone(),
            learner_rng: self.rng.clone(),
            worker_rngs: self.workers.iter().map(|w| w.rng.clone()).collect(),
        }
    }

    /// Deterministic evaluation of the current policy, cached per policy version.
    pub fn evaluate_current(&mut self) -> Result<(EvalSummary, bool)> {
        if let Some((v, s)) = self.cached_eval {
            if v == self.policy_version {
                return Ok((s, false));
            }
        }
        let logs = evaluate(&self.policy, &self.factory, self.config.eval_episodes, true, evaluation_seed(self.config.seed))?;
        let summary = EvalSummary::from_logs(&logs);
        self.cached_eval = Some((self.policy_version, summary));
        Ok((summary, true))
    }

    fn steps_per_env(&self) -> Vec<usize> {
        let n = self.config.n_envs;
        let remaining = self.config.max_timesteps - self.global_step;
        let full = (self.config.n_steps * n) as u64;
        if remaining >= full {
            return vec![self.config.n_steps; n];
        }
        let (base, extra) = ((remaining / n as u64) as usize, (remaining % n as u64) as usize);
        (0..n).map(|i| base + usize::from(i < extra)).collect()
    }

    fn batch(&self, segments: &[Segment]) -> Result<(RolloutBatch, Vec<f64>, usize)> {
        let mut batch = RolloutBatch {
            observations: DMatrix::zeros(0, 0),
            actions: DMatrix::zeros(0, 0),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            ends: Vec::new(),
        };
        let (mut obs, mut actions, mut episode_returns, mut truncations) = (Vec::new(), Vec::new(), Vec::new(), 0);
        for seg in segments {
            let (adv, ret) = compute_gae(&seg.rewards, &seg.values, &seg.ends, self.config.gamma, self.config.gae_lambda)?;
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
            batch.log_probs.extend_from_slice(&seg.log_probs);
            batch.rewards.extend_from_slice(&seg.rewards);
            batch.values.extend_from_slice(&seg.values);
            batch.ends.extend_from_slice(&seg.ends);
            obs.extend_from_slice(&seg.obs);
            actions.extend_from_slice(&seg.actions);
            episode_returns.extend_from_slice(&seg.returns);
            truncations += seg.truncations;
        }
        let n = batch.rewards.len();
        batch.observations = DMatrix::from_vec(self.policy.obs_dim(), n, obs);
        batch.actions = DMatrix::from_vec(self.policy.act_dim(), n, actions);
        Ok((batch, episode_returns, truncations))
    }

    fn note_evaluation(&mut self, summary: &EvalSummary) -> bool {
        if summary.mean_reward > self.best_eval + self.config.plateau_min_delta {
            self.best_eval = summary.mean_reward;
            self.stale_evals = 0;
        } else {
            self.stale_evals += 1;
        }
        self.config.plateau_patience > 0 && self.stale_evals >= self.config.plateau_patience
    }

    fn update(&mut self, segments: &[Segment]) -> Result<IterationStats> {
        let (mut batch, episode_returns, truncations) = self.batch(segments)?;
        if self.config.normalize_advantage {
            batch.normalize_advantages();
        }
        let nonfinite_batch = batch.rewards.iter().chain(&batch.advantages).any(|x| !x.is_finite());
        let mut policy_stats = PolicyUpdateStats { nonfinite: nonfinite_batch, ..Default::default() };
        let mut value_stats = ValueUpdateStats::default();
        if !nonfinite_batch {
            policy_stats = policy_update(&mut self.policy, &batch, &self.config);
            let remaining = 1.0 - self.global_step as f64 / self.config.max_timesteps as f64;
            let lr = self.config.learning_rate(remaining);
            let (value_backup, adam_backup) = (self.value.clone(), self.adam.clone());
            value_stats = value_update(
                &mut self.value,
                &mut self.adam,
                &batch,
                lr,
                self.config.value_epochs,
                self.config.batch_size,
                &mut self.rng,
            );
            if !value_stats.loss_after.is_finite() {
                self.value = value_backup;
                self.adam = adam_backup;
            }
        }
        self.policy_version += 1;
        let finite = !policy_stats.nonfinite && value_stats.loss_after.is_finite();
        self.nonfinite_streak = if finite { 0 } else { self.nonfinite_streak + 1 };
        let mean_episode_return =
            (!episode_returns.is_empty()).then(|| episode_returns.iter().sum::<f64>() / episode_returns.len() as f64);
        Ok(IterationStats {
            global_step: self.global_step,
            policy: policy_stats,
            value: value_stats,
            episodes_finished: episode_returns.len(),
            mean_episode_return,
            truncations,
        })
    }

    /// Trains until `max_timesteps`, an evaluation plateau or the stop flag.
    ///
    /// Evaluation and checkpointing happen after each collection phase for
    /// every multiple of their cadence crossed, using the parameters that
    /// generated the data.
    pub fn run(&mut self, options: &TrainOptions) -> Result<TrainReport> {
        let mut metrics = match &options.out_dir {
            Some(dir) => Some(open_metrics(dir)?),
            None => None,
        };
        let ckpt_dir = options.out_dir.as_ref().map(|d| d.join("checkpoints"));
        if let Some(d) = &ckpt_dir {
            fs::create_dir_all(d)?;
        }
        let mut report = TrainReport {
            global_step: self.global_step,
            stop_reason: StopReason::MaxTimesteps,
            evaluations: Vec::new(),
            checkpoints: Vec::new(),
            iterations: Vec::new(),
        };
        while self.global_step < self.config.max_timesteps {
            if options.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed)) {
                report.stop_reason = StopReason::External;
                break;
            }
            let counts = self.steps_per_env();
            let (policy, value) = (&self.policy, &self.value);
            let segments: Vec<Segment> =
                self.workers.par_iter_mut().zip(counts).map(|(w, n)| w.collect(policy, value, n)).collect::<Result<_>>()?;
            let before = self.global_step;
            self.global_step += segments.iter().map(|s| s.rewards.len() as u64).sum::<u64>();

            let mut plateau = false;
            for step in crossed(before, self.global_step, self.config.eval_every) {
                let (summary, fresh) = self.evaluate_current()?;
                let record = EvalRecord { global_step: step, policy_version: self.policy_version, summary };
                if let Some(w) = metrics.as_mut() {
                    writeln!(w, "{}", record.csv_line())?;
                    w.flush()?;
                }
                log::info!("eval step {step}: return {:.4}, J_T {:.3e}", summary.mean_reward, summary.mean_cost);
                report.evaluations.push(record);
                if fresh {
                    plateau |= self.note_evaluation(&summary);
                }
            }
            for step in crossed(before, self.global_step, self.config.checkpoint_every) {
                let path = match &ckpt_dir {
                    Some(d) => {
                        let p = d.join(checkpoint_file_name(step));
                        self.checkpoint(step).save(&p)?;
                        Some(p)
                    }
                    None => None,
                };
                report.checkpoints.push(CheckpointRecord { global_step: step, path });
            }
            if plateau {
                report.stop_reason = StopReason::Plateau;
                break;
            }

            let stats = self.update(&segments)?;
            log::info!(
                "step {}: kl {:.2e} accepted {} value loss {:.3e} episodes {}",
                stats.global_step,
                stats.policy.kl,
                stats.policy.accepted,
                stats.value.loss_after,
                stats.episodes_finished
            );
            report.iterations.push(stats);
            if self.nonfinite_streak >= self.config.max_nonfinite_updates.max(1) {
                if let Some(dir) = &options.out_dir {
                    let f = File::create(dir.join("diagnostic.json"))?;
                    serde_json::to_writer_pretty(f, &report.iterations).map_err(|e| Error::Parse(e.to_string()))?;
                }
                return Err(Error::NumericalInstability(format!(
                    "{} consecutive updates with non-finite values at step {}",
                    self.nonfinite_streak, self.global_step
                )));
            }
        }
        report.global_step = self.global_step;
        Ok(report)
    }
}

/// Multiples of `every` in (`from`, `to`].
fn crossed(from: u64, to: u64, every: u64) -> impl Iterator<Item = u64> {
    (from / every + 1..=to / every).map(move |k| k * every)
}

pub fn checkpoint_file_name(global_step: u64) -> String {
    format!("checkpoint_{global_step:010}.json")
}

fn open_metrics(dir: &Path) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let path = dir.join("metrics.csv");
    let exists = path.exists();
    let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    if !exists {
        writeln!(w, "{METRICS_HEADER}")?;
    }
    Ok(w)
}

/// Convenience wrapper around [`Trainer::new`] and [`Trainer::run`].
pub fn train(factory: EnvFactory, config: TrainConfig, options: &TrainOptions) -> Result<(Trainer, TrainReport)> {
    let mut trainer = Trainer::new(config, factory)?;
    let report = trainer.run(options)?;
    Ok((trainer, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossed_multiples() {
        assert_eq!(crossed(0, 8192, 2048).collect::<Vec<_>>(), vec![2048, 4096, 6144, 8192]);
        assert_eq!(crossed(8192, 10000, 2048).count(), 0);
        assert_eq!(crossed(2047, 2048, 2048).collect::<Vec<_>>(), vec![2048]);
    }
}
