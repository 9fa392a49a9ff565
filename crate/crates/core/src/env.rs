//! Episodic pulse-shaping environment.
//!
//! Each step the agent proposes K amplitude deltas. They are clipped,
//! accumulated onto the running amplitude and applied over K sampling
//! intervals while the logical states |010⟩, |100⟩ and |110⟩ are propagated
//! (|000⟩ is stationary and handled analytically). Observations are the
//! polar-encoded sector amplitudes of those three states, the normalised
//! time and the last K deltas.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logical::LogicalBlocks;
use crate::metrics::{gate_metrics, EffectiveGate, GateMetrics};
use crate::params::SystemParams;
use crate::pulse::{Pulse, DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use crate::qdyn::{step_propagator, CMatrix, CVector, C64};

pub const TRUNCATION_REWARD: f64 = -10.0;
pub const COST_FLOOR: f64 = 1e-12;
const NORM_DIVERGENCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Sampling intervals per environment step (K).
    pub substeps: usize,
    /// Sampling interval in ns.
    pub dt: f64,
    /// Episode horizon in ns.
    pub t_max: f64,
    /// Absolute amplitude cap in GHz.
    pub amp_cap: f64,
    /// Per-substep delta bound in GHz.
    pub delta_cap: f64,
    pub alpha_tv: f64,
    /// Penalise |Δu| rather than the signed delta.
    pub tv_absolute: bool,
    /// Fractional half-width of the uniform ω₁, ω₂ perturbation drawn at reset.
    pub randomization: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            substeps: 3,
            dt: DEFAULT_DT,
            t_max: 50.0,
            amp_cap: DEFAULT_AMPLITUDE_CAP,
            delta_cap: 0.2,
            alpha_tv: 1e-3,
            tv_absolute: true,
            randomization: 0.0,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        if !(self.dt > 0.0) || !(self.t_max > 0.0) {
            return bad("dt and t_max must be positive".into());
        }
        if self.total_substeps() < self.substeps {
            return bad(format!("t_max/dt = {} is shorter than one step", self.total_substeps()));
        }
        if !(self.amp_cap > 0.0) || !(self.delta_cap > 0.0) {
            return bad("amp_cap and delta_cap must be positive".into());
        }
        if !(0.0..1.0).contains(&self.randomization) {
            return bad(format!("randomization must lie in [0, 1), got {}", self.randomization));
        }
        Ok(())
    }

    /// Number of sampling intervals covering t_max.
    pub fn total_substeps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Steps in an untruncated episode: ⌈(t_max/dt)/K⌉.
    pub fn episode_steps(&self) -> usize {
        self.total_substeps().div_ceil(self.substeps)
    }

    pub fn observation_dim(&self) -> usize {
        OBSERVED_COMPONENTS * 2 + 1 + self.substeps
    }
}

/// 3 + 3 + 6 complex components.
const OBSERVED_COMPONENTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// (2|z| − 1, arg(z)/π) with arg(0) := 0 and phases in (−1, 1].
pub fn encode_amplitude(z: C64) -> (f64, f64) {
    let amp = 2.0 * z.norm() - 1.0;
    if z.norm_sqr() == 0.0 {
        return (amp, 0.0);
    }
    let mut phase = z.arg() / std::f64::consts::PI;
    if phase <= -1.0 {
        phase = 1.0;
    }
    (amp, phase)
}

/// Observation vector from the tracked sector states, normalised time and
/// the last deltas.
pub fn encode_observation(state_010: &CVector, state_100: &CVector, state_110: &CVector, t_norm: f64, last_deltas: &[f64]) -> Observation {
    let mut out = Vec::with_capacity(OBSERVED_COMPONENTS * 2 + 1 + last_deltas.len());
    for z in state_010.iter().chain(state_100.iter()).chain(state_110.iter()) {
        let (a, p) = encode_amplitude(*z);
        out.push(a);
        out.push(p);
    }
    out.push(t_norm);
    out.extend_from_slice(last_deltas);
    Observation(out)
}

/// −log₁₀(max(J_T, 10⁻¹²)) − (α_TV/K)·Σ a⁽ⁱ⁾, with |a⁽ⁱ⁾| when `absolute`.
pub fn reward(cost: f64, deltas: &[f64], alpha_tv: f64, absolute: bool) -> f64 {
    let tv: f64 = if absolute { deltas.iter().map(|d| d.abs()).sum() } else { deltas.iter().sum() };
    -cost.max(COST_FLOOR).log10() - alpha_tv / deltas.len().max(1) as f64 * tv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationStatus {
    Converged,
    Diverged,
}

/// True iff some |u| exceeds the cap (strictly), is not finite, or the
/// propagation diverged.
pub fn truncation_check(amplitudes: &[f64], cap: f64, status: PropagationStatus) -> bool {
    status == PropagationStatus::Diverged || amplitudes.iter().any(|u| !u.is_finite() || u.abs() > cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t_ns: f64,
    pub metrics: GateMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t_ns: f64,
    pub reward: f64,
    pub concurrence: f64,
    pub unitarity: f64,
    pub cost: f64,
    pub truncated: bool,
}

/// Everything generated in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: EnvConfig,
    pub omega1: f64,
    pub omega2: f64,
    /// Generated amplitudes in GHz, K per step, including a violating segment.
    pub amplitudes: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct LogHeader<'a> {
    config: &'a EnvConfig,
    omega1: f64,
    omega2: f64,
    steps: usize,
    truncated: bool,
    total_reward: f64,
}

impl EpisodeLog {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn truncated(&self) -> bool {
        self.steps.last().is_some_and(|s| s.truncated)
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    pub fn pulse(&self) -> Result<Pulse> {
        Pulse::new(self.config.dt, self.amplitudes.clone())
    }

    /// CSV with one row per pulse sample; metric columns repeat the values of
    /// the environment step the sample belongs to.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,t_ns,u_ghz,reward,C,U,J_T")?;
        let k = self.config.substeps;
        for (s, u) in self.amplitudes.iter().enumerate() {
            let rec = &self.steps[s / k];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                rec.step,
                s as f64 * self.config.dt,
                u,
                rec.reward,
                rec.concurrence,
                rec.unitarity,
                rec.cost
            )?;
        }
        Ok(())
    }

    pub fn write_header_json<W: Write>(&self, w: W) -> Result<()> {
        let header = LogHeader {
            config: &self.config,
            omega1: self.omega1,
            omega2: self.omega2,
            steps: self.steps.len(),
            truncated: self.truncated(),
            total_reward: self.total_reward(),
        };
        serde_json::to_writer_pretty(w, &header).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let csv = std::fs::File::create(stem.with_extension("csv"))?;
        self.write_csv(std::io::BufWriter::new(csv))?;
        let json = std::fs::File::create(stem.with_extension("json"))?;
        self.write_header_json(std::io::BufWriter::new(json))
    }
}

pub struct PulseEnv {
    base: SystemParams,
    config: EnvConfig,
    rng: ChaCha8Rng,
    params: SystemParams,
    blocks: LogicalBlocks,
    s010: CVector,
    s100: CVector,
    s110: CVector,
    u: f64,
    substeps_done: usize,
    last_deltas: Vec<f64>,
    metrics: GateMetrics,
    done: bool,
    log: EpisodeLog,
}

impl PulseEnv {
    pub fn new(base: SystemParams, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        base.validate()?;
        let blocks = LogicalBlocks::new(&base)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut env = Self {
            base,
            params: base,
            rng,
            s010: CVector::zeros(0),
            s100: CVector::zeros(0),
            s110: CVector::zeros(0),
            u: 0.0,
            substeps_done: 0,
            last_deltas: vec![0.0; config.substeps],
            metrics: gate_metrics(&EffectiveGate::identity()),
            done: true,
            log: EpisodeLog { config: config.clone(), omega1: base.omega1, omega2: base.omega2, amplitudes: vec![], steps: vec![] },
            blocks,
            config,
        };
        env.reset(None)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Parameters in force for the current episode (after randomisation).
    pub fn episode_params(&self) -> &SystemParams {
        &self.params
    }

    pub fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.config.substeps
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn time_ns(&self) -> f64 {
        self.substeps_done as f64 * self.config.dt
    }

    pub fn metrics(&self) -> GateMetrics {
        self.metrics
    }

    /// Starts a new episode; `Some(seed)` restarts the random stream.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Observation> {
        if let Some(seed) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        let r = self.config.randomization;
        let params = if r > 0.0 {
            let o1 = self.base.omega1 * (1.0 + self.rng.random_range(-r..=r));
            let o2 = self.base.omega2 * (1.0 + self.rng.random_range(-r..=r));
            SystemParams { omega1: o1, omega2: o2, ..self.base }
        } else {
            self.base
        };
        if params != self.params {
            self.blocks = LogicalBlocks::new(&params)?;
            self.params = params;
        }
        (self.s010, self.s100, self.s110) = self.blocks.initial_states();
        self.u = 0.0;
        self.substeps_done = 0;
        self.last_deltas.iter_mut().for_each(|d| *d = 0.0);
        self.metrics = gate_metrics(&self.blocks.gate_from_states(&self.s010, &self.s100, &self.s110));
        self.done = false;
        self.log = EpisodeLog {
            config: self.config.clone(),
            omega1: self.params.omega1,
            omega2: self.params.omega2,
            amplitudes: Vec::with_capacity(self.config.total_substeps() + self.config.substeps),
            steps: Vec::with_capacity(self.config.episode_steps()),
        };
        Ok(self.observation())
    }

    pub fn observation(&self) -> Observation {
        let t_norm = self.time_ns() / self.config.t_max;
        encode_observation(&self.s010, &self.s100, &self.s110, t_norm, &self.last_deltas)
    }

    fn propagate(&self, amplitudes: &[f64]) -> Result<Option<(CVector, CVector, CVector)>> {
        let (b, dt) = (&self.blocks, self.config.dt);
        let (mut s010, mut s100, mut s110) = (self.s010.clone(), self.s100.clone(), self.s110.clone());
        for &u in amplitudes {
            let p1: CMatrix = step_propagator(&b.single().drift, &b.single().control, u, dt)?;
            let p2: CMatrix = step_propagator(&b.double().drift, &b.double().control, u, dt)?;
            s010 = &p1 * s010;
            s100 = &p1 * s100;
            s110 = &p2 * s110;
        }
        let ok = [&s010, &s100, &s110].iter().all(|s| {
            let n = s.norm();
            n.is_finite() && (n - 1.0).abs() <= NORM_DIVERGENCE
        });
        Ok(ok.then_some((s010, s100, s110)))
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let k = self.config.substeps;
        if action.len() != k {
            return Err(Error::InvalidArgument(format!("action must have {k} entries, got {}", action.len())));
        }
        let cap = self.config.delta_cap;
        let deltas: Vec<f64> = action.iter().map(|a| a.clamp(-cap, cap)).collect();
        let mut amplitudes = Vec::with_capacity(k);
        let mut u = self.u;
        for d in &deltas {
            u += d;
            amplitudes.push(u);
        }
        self.log.amplitudes.extend_from_slice(&amplitudes);
        self.last_deltas.copy_from_slice(&deltas);

        let mut status = PropagationStatus::Converged;
        if !truncation_check(&amplitudes, self.config.amp_cap, status) {
            match self.propagate(&amplitudes) {
                Ok(Some((a, b, c))) => {
                    self.s010 = a;
                    self.s100 = b;
                    self.s110 = c;
                }
                Ok(None) | Err(Error::NumericalInstability(_)) => status = PropagationStatus::Diverged,
                Err(e) => return Err(e),
            }
        }
        let truncated = truncation_check(&amplitudes, self.config.amp_cap, status);
        let step = self.log.steps.len();

        let reward_value = if truncated {
            self.done = true;
            TRUNCATION_REWARD
        } else {
            self.u = u;
            self.substeps_done += k;
            self.metrics = gate_metrics(&self.blocks.gate_from_states(&self.s010, &self.s100, &self.s110));
            reward(self.metrics.cost, &deltas, self.config.alpha_tv, self.config.tv_absolute)
        };
        let terminated = !truncated && self.substeps_done >= self.config.total_substeps();
        self.done |= terminated;

        let info = StepInfo { t_ns: self.time_ns(), metrics: self.metrics };
        self.log.steps.push(StepRecord {
            step,
            t_ns: info.t_ns,
            reward: reward_value,
            concurrence: self.metrics.concurrence,
            unitarity: self.metrics.unitarity,
            cost: self.metrics.cost,
            truncated,
        });
        Ok(StepResult { observation: self.observation(), reward: reward_value, terminated, truncated, info })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> PulseEnv {
        PulseEnv::new(SystemParams::default(), EnvConfig::default()).unwrap()
    }

    #[test]
    fn observation_layout() {
        let mut e = env();
        let obs = e.reset(Some(1)).unwrap();
        assert_eq!(obs.0.len(), 28);
        // ⟨010|ψ_010⟩ = 1 is the second component of the first block.
        assert_eq!((obs.0[2], obs.0[3]), (1.0, 0.0));
        assert_eq!((obs.0[0], obs.0[1]), (-1.0, 0.0));
        assert_eq!(obs.0[24], 0.0);
        assert_eq!(&obs.0[25..], &[0.0, 0.0, 0.0]);
        let cfg = EnvConfig { substeps: 5, ..EnvConfig::default() };
        assert_eq!(cfg.observation_dim(), 30);
    }

    #[test]
    fn amplitude_encoding() {
        assert_eq!(encode_amplitude(C64::new(1.0, 0.0)), (1.0, 0.0));
        assert_eq!(encode_amplitude(C64::new(-0.5, 0.0)), (0.0, 1.0));
        assert_eq!(encode_amplitude(C64::new(-0.5, -0.0)), (0.0, 1.0));
        assert_eq!(encode_amplitude(C64::new(0.0, 0.0)), (-1.0, 0.0));
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward(1e-4, &[0.0; 3], 1e-3, true), 4.0);
        assert_eq!(reward(1e-3, &[0.0; 3], 1e-3, true), 3.0);
        let r = reward(0.25, &[0.1; 3], 1e-3, true);
        assert!((r - (0.25f64.log10().abs() - 1e-4)).abs() < 1e-15);
        assert!((reward(0.25, &[0.1, -0.1, -0.1], 1e-3, false) - (-(0.25f64.log10()) + 1e-3 / 30.0)).abs() < 1e-15);
        assert_eq!(reward(0.0, &[0.0; 3], 1e-3, true), 12.0);
    }

    #[test]
    fn truncation_rules() {
        let cap = DEFAULT_AMPLITUDE_CAP;
        assert!(!truncation_check(&[cap, -cap], cap, PropagationStatus::Converged));
        assert!(truncation_check(&[f64::NAN], cap, PropagationStatus::Converged));
        assert!(truncation_check(&[cap + 1e-12], cap, PropagationStatus::Converged));
        assert!(!truncation_check(&[0.1, 2.0], cap, PropagationStatus::Converged));
        assert!(truncation_check(&[0.1], cap, PropagationStatus::Diverged));
    }

    #[test]
    fn zero_action_episode_length() {
        let mut e = env();
        let mut steps = 0;
        loop {
            let r = e.step(&[0.0; 3]).unwrap();
            steps += 1;
            assert!(!r.truncated);
            if r.terminated {
                assert!((r.info.t_ns - 50.1).abs() < 1e-9);
                break;
            }
        }
        assert_eq!(steps, 334);
        assert_eq!(EnvConfig::default().episode_steps(), 334);
        assert!(matches!(e.step(&[0.0; 3]), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn amplitude_violation_truncates() {
        let mut e = env();
        let mut last = None;
        for _ in 0..10 {
            let r = e.step(&[0.2; 3]).unwrap();
            if r.done() {
                last = Some(r);
                break;
            }
        }
        let r = last.expect("cap of 10/π is crossed within 6 steps");
        assert!(r.truncated && !r.terminated);
        assert_eq!(r.reward, TRUNCATION_REWARD);
        assert!(e.log().truncated());
    }

    #[test]
    fn randomised_frequencies_stay_in_band() {
        let cfg = EnvConfig { randomization: 0.001, ..EnvConfig::default() };
        let mut e = PulseEnv::new(SystemParams::default(), cfg).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in 0..50 {
            e.reset(Some(s)).unwrap();
            let p = e.episode_params();
            assert!((5.884010..=5.895790).contains(&p.omega1), "{}", p.omega1);
            assert!((0.999 * 5.0311..=1.001 * 5.0311).contains(&p.omega2));
            seen.insert(p.omega1.to_bits());
        }
        assert!(seen.len() > 40);
    }
}
