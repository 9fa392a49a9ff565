//! Gradient-based optimal control of piecewise-constant pulses.
//!
//! [`ControlProblem`] caches the two excitation blocks that carry the logical
//! states. Forward column products and backward row products of the block
//! propagators make a central finite difference of any gate functional cost
//! two small matrix exponentials per amplitude. The analytic adjoint gradient
//! of the unitarity and of a target-gate fidelity uses exact propagator
//! derivatives from the eigendecomposition of each step Hamiltonian.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logical::{entries_to_gate, LogicalBlocks, ENTRIES};
use crate::metrics::{gate_metrics, gates, unitarity, EffectiveGate, Gate4, GateMetrics};
use crate::params::SystemParams;
use crate::pulse::{Pulse, DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use crate::qdyn::{step_propagator, CMatrix, ExcitationSector, C64, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GuessShape {
    /// Half-cosine ramps of length `rise` ns around a plateau at `amplitude` GHz.
    FlatTop { amplitude: f64, rise: f64 },
    /// amplitude·sin(2π·frequency·t).
    SingleFrequency { frequency: f64, amplitude: f64 },
}

impl GuessShape {
    pub fn flat_top() -> Self {
        GuessShape::FlatTop { amplitude: 0.5, rise: 2.0 }
    }

    pub fn single_frequency() -> Self {
        GuessShape::SingleFrequency { frequency: 2.0, amplitude: 0.5 }
    }

    pub fn peak_amplitude(&self) -> f64 {
        match *self {
            GuessShape::FlatTop { amplitude, .. } | GuessShape::SingleFrequency { amplitude, .. } => amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuessPulse {
    pub shape: GuessShape,
    pub duration: f64,
    pulse: Pulse,
}

impl GuessPulse {
    pub fn pulse(&self) -> &Pulse {
        &self.pulse
    }

    pub fn into_pulse(self) -> Pulse {
        self.pulse
    }
}

fn half_cosine_ramp(s: f64, rise: f64) -> f64 {
    if s >= rise {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * s / rise).cos())
    }
}

/// Samples the guess at t = k·dt for k = 0..round(T/dt).
pub fn make_guess(shape: GuessShape, duration: f64, dt: f64) -> Result<GuessPulse> {
    if !(dt > 0.0) || !(duration >= 2.0 * dt) {
        return Err(Error::InvalidArgument(format!("need duration ≥ 2·dt, got T={duration}, dt={dt}")));
    }
    let n = (duration / dt).round() as usize;
    let t_end = (n - 1) as f64 * dt;
    let amplitudes: Vec<f64> = match shape {
        GuessShape::FlatTop { amplitude, rise } => {
            if !(rise > 0.0) || 2.0 * rise > t_end || !amplitude.is_finite() {
                return Err(Error::InvalidArgument(format!("flat-top rise {rise} does not fit in {duration} ns")));
            }
            (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    amplitude * half_cosine_ramp(t, rise) * half_cosine_ramp(t_end - t, rise)
                })
                .collect()
        }
        GuessShape::SingleFrequency { frequency, amplitude } => {
            if !frequency.is_finite() || !amplitude.is_finite() {
                return Err(Error::InvalidArgument("single-frequency guess needs finite parameters".into()));
            }
            (0..n).map(|k| amplitude * (TWO_PI * frequency * k as f64 * dt).sin()).collect()
        }
    };
    Ok(GuessPulse { shape, duration, pulse: Pulse::new(dt, amplitudes)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    JtFiniteDifference,
    TargetGateAnalytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGate {
    Identity,
    Cnot,
    Swap,
    Iswap,
    SqrtSwap,
    SqrtIswap,
}

impl TargetGate {
    pub fn matrix(self) -> Gate4 {
        match self {
            TargetGate::Identity => gates::identity(),
            TargetGate::Cnot => gates::cnot(),
            TargetGate::Swap => gates::swap(),
            TargetGate::Iswap => gates::iswap(),
            TargetGate::SqrtSwap => gates::sqrt_swap(),
            TargetGate::SqrtIswap => gates::sqrt_iswap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub scheme: GradientScheme,
    /// Central-difference step in GHz.
    pub fd_step: f64,
    /// Stop once the objective is at or below this value.
    pub threshold: f64,
    pub amp_cap: f64,
    pub target: Option<TargetGate>,
    /// Length in GHz of the first steepest-descent trial step.
    pub initial_step: f64,
    pub min_improvement: f64,
    /// L-BFGS history length; 0 gives plain projected steepest descent.
    pub memory: usize,
    /// Store a pulse snapshot every this many accepted iterations (0 = never).
    pub snapshot_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            scheme: GradientScheme::JtFiniteDifference,
            fd_step: 1e-5,
            threshold: 1e-4,
            amp_cap: DEFAULT_AMPLITUDE_CAP,
            target: None,
            initial_step: 0.05,
            min_improvement: 1e-10,
            memory: 10,
            snapshot_every: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.fd_step > 0.0) || !(self.initial_step > 0.0) || !(self.amp_cap > 0.0) {
            return bad("fd_step, initial_step and amp_cap must be positive");
        }
        if !(self.min_improvement >= 0.0) || !self.threshold.is_finite() {
            return bad("threshold and min_improvement must be finite and non-negative");
        }
        if self.scheme == GradientScheme::TargetGateAnalytic && self.target.is_none() {
            return bad("the analytic scheme needs a target gate");
        }
        Ok(())
    }
}

/// 1 − (|Tr(G†Ô)|² + Tr(Ô†Ô))/20.
pub fn target_infidelity(gate: &EffectiveGate, target: &Gate4) -> f64 {
    let tau: C64 = target.iter().zip(gate.0.iter()).map(|(t, o)| t.conj() * o).sum();
    1.0 - (tau.norm_sqr() + 4.0 * unitarity(gate)) / 20.0
}

/// Per-step propagators and the cached partial products for one pulse.
struct Sweep {
    p1: Vec<CMatrix>,
    p2: Vec<CMatrix>,
    /// Columns |010⟩, |100⟩ of P₁(k−1)…P₁(0), and the |110⟩ column for N=2.
    fwd1: Vec<CMatrix>,
    fwd2: Vec<CMatrix>,
    /// Rows ⟨010|, ⟨100| of P₁(n−1)…P₁(k+1), and the ⟨110| row for N=2.
    bwd1: Vec<CMatrix>,
    bwd2: Vec<CMatrix>,
}

/// Optimal-control problem on the logical blocks of a fixed system.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    blocks: LogicalBlocks,
    dt: f64,
}

fn unit_columns(dim: usize, positions: &[usize]) -> CMatrix {
    CMatrix::from_fn(dim, positions.len(), |r, c| if r == positions[c] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

fn sandwich(rows: &CMatrix, p: &CMatrix, cols: &CMatrix) -> CMatrix {
    rows * (p * cols)
}

/// exp(−iH dt) and its derivative with respect to u for H = H₀ + 2πu·H₁.
fn propagator_with_derivative(sector: &ExcitationSector, u: f64, dt: f64) -> (CMatrix, CMatrix) {
    let h = &sector.drift + &sector.control * C64::new(TWO_PI * u, 0.0);
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let w = eig.eigenvalues;
    let d = w.len();
    let e: Vec<C64> = w.iter().map(|&x| C64::new(0.0, -x * dt).exp()).collect();
    let v_adj = v.adjoint();
    let p = &v * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.clone())) * &v_adj;
    let x = &v_adj * (&sector.control * C64::new(TWO_PI, 0.0)) * &v;
    let g = DMatrix::from_fn(d, d, |a, b| {
        let gap = w[a] - w[b];
        if gap.abs() > 1e-10 {
            (e[a] - e[b]) / gap
        } else {
            C64::new(0.0, -dt) * e[a]
        }
    });
    let dp = &v * g.component_mul(&x) * &v_adj;
    (p, dp)
}

impl ControlProblem {
    pub fn new(params: &SystemParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { blocks: LogicalBlocks::new(params)?, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn blocks(&self) -> &LogicalBlocks {
        &self.blocks
    }

    fn step(&self, u: f64) -> Result<(CMatrix, CMatrix)> {
        let (s1, s2) = (self.blocks.single(), self.blocks.double());
        Ok((step_propagator(&s1.drift, &s1.control, u, self.dt)?, step_propagator(&s2.drift, &s2.control, u, self.dt)?))
    }

    fn entries(&self, m1: &CMatrix, m2: &CMatrix) -> [C64; ENTRIES] {
        [m1[(0, 0)], m1[(0, 1)], m1[(1, 0)], m1[(1, 1)], m2[(0, 0)]]
    }

    /// Effective gate of a pulse sampled at this problem's dt.
    pub fn gate(&self, amplitudes: &[f64]) -> Result<EffectiveGate> {
        let (s1, s2) = (self.blocks.single(), self.blocks.double());
        let mut c1 = unit_columns(s1.dim(), &self.blocks.single_positions());
        let mut c2 = unit_columns(s2.dim(), &[self.blocks.double_position()]);
        for &u in amplitudes {
            let (p1, p2) = self.step(u)?;
            c1 = p1 * c1;
            c2 = p2 * c2;
        }
        let [a, b] = self.blocks.single_positions();
        let c = self.blocks.double_position();
        Ok(entries_to_gate([c1[(a, 0)], c1[(a, 1)], c1[(b, 0)], c1[(b, 1)], c2[(c, 0)]]))
    }

    pub fn metrics(&self, amplitudes: &[f64]) -> Result<GateMetrics> {
        Ok(gate_metrics(&self.gate(amplitudes)?))
    }

    /// Gate metrics after each sample: entry `k` covers amplitudes `0..=k`.
    pub fn metrics_trajectory(&self, amplitudes: &[f64]) -> Result<Vec<GateMetrics>> {
        let (s1, s2) = (self.blocks.single(), self.blocks.double());
        let mut c1 = unit_columns(s1.dim(), &self.blocks.single_positions());
        let mut c2 = unit_columns(s2.dim(), &[self.blocks.double_position()]);
        let [a, b] = self.blocks.single_positions();
        let c = self.blocks.double_position();
        let mut out = Vec::with_capacity(amplitudes.len());
        for &u in amplitudes {
            let (p1, p2) = self.step(u)?;
            c1 = p1 * c1;
            c2 = p2 * c2;
            out.push(gate_metrics(&entries_to_gate([c1[(a, 0)], c1[(a, 1)], c1[(b, 0)], c1[(b, 1)], c2[(c, 0)]])));
        }
        Ok(out)
    }

    fn sweep(&self, amplitudes: &[f64]) -> Result<Sweep> {
        let n = amplitudes.len();
        let mut p1 = Vec::with_capacity(n);
        let mut p2 = Vec::with_capacity(n);
        for &u in amplitudes {
            let (a, b) = self.step(u)?;
            p1.push(a);
            p2.push(b);
        }
        Ok(self.sweep_from(p1, p2))
    }

    fn sweep_from(&self, p1: Vec<CMatrix>, p2: Vec<CMatrix>) -> Sweep {
        let n = p1.len();
        let (s1, s2) = (self.blocks.single(), self.blocks.double());
        let pos1 = self.blocks.single_positions();
        let pos2 = [self.blocks.double_position()];
        let mut fwd1 = Vec::with_capacity(n);
        let mut fwd2 = Vec::with_capacity(n);
        let (mut c1, mut c2) = (unit_columns(s1.dim(), &pos1), unit_columns(s2.dim(), &pos2));
        for k in 0..n {
            fwd1.push(c1.clone());
            fwd2.push(c2.clone());
            c1 = &p1[k] * c1;
            c2 = &p2[k] * c2;
        }
        let mut bwd1 = vec![CMatrix::zeros(0, 0); n];
        let mut bwd2 = vec![CMatrix::zeros(0, 0); n];
        let (mut r1, mut r2) = (unit_columns(s1.dim(), &pos1).transpose(), unit_columns(s2.dim(), &pos2).transpose());
        for k in (0..n).rev() {
            bwd1[k] = r1.clone();
            bwd2[k] = r2.clone();
            r1 = r1 * &p1[k];
            r2 = r2 * &p2[k];
        }
        Sweep { p1, p2, fwd1, fwd2, bwd1, bwd2 }
    }

    /// Gate with amplitude k replaced by `u`, reusing the cached products.
    fn perturbed_gate(&self, sweep: &Sweep, k: usize, u: f64) -> Result<EffectiveGate> {
        let (p1, p2) = self.step(u)?;
        let m1 = sandwich(&sweep.bwd1[k], &p1, &sweep.fwd1[k]);
        let m2 = sandwich(&sweep.bwd2[k], &p2, &sweep.fwd2[k]);
        Ok(entries_to_gate(self.entries(&m1, &m2)))
    }

    /// Central finite differences of an arbitrary gate functional.
    pub fn gradient<F>(&self, amplitudes: &[f64], h: f64, functional: F) -> Result<Vec<f64>>
    where
        F: Fn(&EffectiveGate) -> f64,
    {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
        }
        let sweep = self.sweep(amplitudes)?;
        amplitudes
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let plus = functional(&self.perturbed_gate(&sweep, k, u + h)?);
                let minus = functional(&self.perturbed_gate(&sweep, k, u - h)?);
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }

    /// Central finite-difference gradient of J_T.
    pub fn gradient_jt(&self, amplitudes: &[f64], h: f64) -> Result<Vec<f64>> {
        self.gradient(amplitudes, h, |g| gate_metrics(g).cost)
    }

    /// Returns Ô and ∂Ô_e/∂u_k for the five non-trivial entries.
    fn gate_derivatives(&self, amplitudes: &[f64]) -> Result<(EffectiveGate, Vec<[C64; ENTRIES]>)> {
        if let Some(u) = amplitudes.iter().find(|u| !u.is_finite()) {
            return Err(Error::NumericalInstability(format!("non-finite control amplitude {u}")));
        }
        let (s1, s2) = (self.blocks.single(), self.blocks.double());
        let (mut p1, mut p2, mut d1, mut d2) = (vec![], vec![], vec![], vec![]);
        for &u in amplitudes {
            let (a, da) = propagator_with_derivative(s1, u, self.dt);
            let (b, db) = propagator_with_derivative(s2, u, self.dt);
            p1.push(a);
            p2.push(b);
            d1.push(da);
            d2.push(db);
        }
        let sweep = self.sweep_from(p1, p2);
        let derivs = (0..amplitudes.len())
            .map(|k| {
                let m1 = sandwich(&sweep.bwd1[k], &d1[k], &sweep.fwd1[k]);
                let m2 = sandwich(&sweep.bwd2[k], &d2[k], &sweep.fwd2[k]);
                self.entries(&m1, &m2)
            })
            .collect();
        let gate = match amplitudes.len() {
            0 => EffectiveGate::identity(),
            n => {
                let m1 = sandwich(&sweep.bwd1[n - 1], &sweep.p1[n - 1], &sweep.fwd1[n - 1]);
                let m2 = sandwich(&sweep.bwd2[n - 1], &sweep.p2[n - 1], &sweep.fwd2[n - 1]);
                entries_to_gate(self.entries(&m1, &m2))
            }
        };
        Ok((gate, derivs))
    }

    /// Adjoint gradient of U = Tr(Ô†Ô)/4.
    pub fn unitarity_gradient_adjoint(&self, amplitudes: &[f64]) -> Result<Vec<f64>> {
        let (gate, derivs) = self.gate_derivatives(amplitudes)?;
        let o = gate_entries(&gate);
        Ok(derivs.iter().map(|d| 0.5 * (0..ENTRIES).map(|e| (o[e].conj() * d[e]).re).sum::<f64>()).collect())
    }

    /// Target infidelity and its adjoint gradient.
    pub fn target_gradient_adjoint(&self, amplitudes: &[f64], target: &Gate4) -> Result<(f64, Vec<f64>)> {
        let (gate, derivs) = self.gate_derivatives(amplitudes)?;
        let o = gate_entries(&gate);
        let t = gate_entries(&EffectiveGate(*target));
        let tau: C64 = target.iter().zip(gate.0.iter()).map(|(t, o)| t.conj() * o).sum();
        let grad = derivs
            .iter()
            .map(|d| {
                let dtau: C64 = (0..ENTRIES).map(|e| t[e].conj() * d[e]).sum();
                let du: f64 = 0.5 * (0..ENTRIES).map(|e| (o[e].conj() * d[e]).re).sum::<f64>();
                -(2.0 * (tau.conj() * dtau).re + 4.0 * du) / 20.0
            })
            .collect();
        Ok((target_infidelity(&gate, target), grad))
    }
}

fn gate_entries(g: &EffectiveGate) -> [C64; ENTRIES] {
    let m = &g.0;
    [m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)], m[(3, 3)]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub cost: f64,
    pub concurrence: f64,
    pub unitarity: f64,
    pub gradient_norm: f64,
    /// Accepted step length ‖Δu‖₂ in GHz (0 for the guess).
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Guess first, then one record per accepted step.
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub converged: bool,
    pub stalled: bool,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cost)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,objective,J_T,C,U,grad_norm,step")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iteration, r.objective, r.cost, r.concurrence, r.unitarity, r.gradient_norm, r.step
            )?;
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 40;

struct Objective<'a> {
    problem: &'a ControlProblem,
    config: &'a OptimizerConfig,
    target: Option<Gate4>,
}

impl Objective<'_> {
    fn value(&self, x: &[f64]) -> Result<(f64, GateMetrics)> {
        let gate = self.problem.gate(x)?;
        let m = gate_metrics(&gate);
        let f = match &self.target {
            Some(t) => target_infidelity(&gate, t),
            None => m.cost,
        };
        Ok((f, m))
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.target {
            Some(t) => Ok(self.problem.target_gradient_adjoint(x, t)?.1),
            None => self.problem.gradient_jt(x, self.config.fd_step),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion; `history` holds (s, y, 1/sᵀy), oldest first.
fn lbfgs_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Minimises J_T (or the target infidelity) over amplitudes in [−cap, cap].
///
/// Directions come from a projected L-BFGS model with a steepest-descent
/// fallback; the step is halved until the objective strictly decreases, so
/// the recorded objective is non-increasing.
pub fn grape_optimize(problem: &ControlProblem, guess: &Pulse, config: &OptimizerConfig) -> Result<(Pulse, OptimizationTrace)> {
    config.validate()?;
    if (guess.dt() - problem.dt()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("guess dt {} differs from problem dt {}", guess.dt(), problem.dt())));
    }
    let cap = config.amp_cap;
    if !guess.within_cap(cap) {
        return Err(Error::InvalidArgument(format!("guess peak {} exceeds the cap {cap}", guess.max_abs())));
    }
    let objective = Objective { problem, config, target: config.target.filter(|_| config.scheme == GradientScheme::TargetGateAnalytic).map(TargetGate::matrix) };

    let mut x = guess.amplitudes().to_vec();
    let (mut f, mut m) = objective.value(&x)?;
    let mut trace = OptimizationTrace::default();
    let record = |iteration: usize, f: f64, m: &GateMetrics, g: f64, step: f64| IterationRecord {
        iteration,
        objective: f,
        cost: m.cost,
        concurrence: m.concurrence,
        unitarity: m.unitarity,
        gradient_norm: g,
        step,
    };
    if f <= config.threshold {
        trace.records.push(record(0, f, &m, f64::NAN, 0.0));
        trace.converged = true;
        return Ok((guess.clone(), trace));
    }
    let mut g = objective.gradient(&x)?;
    trace.records.push(record(0, f, &m, norm(&g), 0.0));
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);

    for iteration in 1..=config.max_iters {
        let active: Vec<bool> = x.iter().zip(&g).map(|(&xi, &gi)| (xi >= cap && gi < 0.0) || (xi <= -cap && gi > 0.0)).collect();
        let gp: Vec<f64> = g.iter().zip(&active).map(|(&gi, &a)| if a { 0.0 } else { gi }).collect();
        let gp_norm = norm(&gp);
        if gp_norm == 0.0 || !gp_norm.is_finite() {
            trace.stalled = true;
            break;
        }
        let steepest = || gp.iter().map(|gi| -gi * config.initial_step / gp_norm).collect::<Vec<f64>>();

        let mut accepted = None;
        for use_model in [!history.is_empty(), false] {
            let mut d = if use_model { lbfgs_direction(&gp, &history) } else { steepest() };
            d.iter_mut().zip(&active).for_each(|(di, &a)| if a { *di = 0.0 });
            if use_model && dot(&d, &gp) >= 0.0 {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..MAX_HALVINGS {
                let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| (xi + alpha * di).clamp(-cap, cap)).collect();
                let (fnew, mnew) = objective.value(&xn)?;
                if fnew < f {
                    accepted = Some((xn, fnew, mnew));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            history.clear();
        }
        let Some((xn, fnew, mnew)) = accepted else {
            trace.stalled = true;
            break;
        };
        let gn = objective.gradient(&xn)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if config.memory > 0 && sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s.clone(), y, 1.0 / sy));
        }
        let improvement = f - fnew;
        (x, f, m, g) = (xn, fnew, mnew, gn);
        trace.records.push(record(iteration, f, &m, norm(&g), norm(&s)));
        if config.snapshot_every > 0 && iteration % config.snapshot_every == 0 {
            trace.snapshots.push((iteration, x.clone()));
        }
        if f <= config.threshold {
            trace.converged = true;
            break;
        }
        if improvement < config.min_improvement {
            trace.stalled = true;
            break;
        }
    }
    Ok((Pulse::new(guess.dt(), x)?, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QslConfig {
    pub durations: Vec<f64>,
    pub caps: Vec<f64>,
    pub restarts: usize,
    pub threshold: f64,
    pub dt: f64,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for QslConfig {
    fn default() -> Self {
        Self {
            durations: (4..=30).map(f64::from).collect(),
            caps: vec![1.0, 1.5, DEFAULT_AMPLITUDE_CAP],
            restarts: 3,
            threshold: 1e-4,
            dt: DEFAULT_DT,
            seed: 0,
            optimizer: OptimizerConfig { max_iters: 3000, ..OptimizerConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslCell {
    pub duration: f64,
    pub cap: f64,
    /// Final J_T of each restart, in restart order.
    pub restart_costs: Vec<f64>,
}

impl QslCell {
    pub fn best(&self) -> f64 {
        self.best_of(self.restart_costs.len())
    }

    /// Best J_T over the first `r` restarts.
    pub fn best_of(&self, r: usize) -> f64 {
        self.restart_costs.iter().take(r).cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslSweepResult {
    pub threshold: f64,
    pub durations: Vec<f64>,
    pub caps: Vec<f64>,
    /// Duration-major: cells[i·caps.len() + j] is (durations[i], caps[j]).
    pub cells: Vec<QslCell>,
}

impl QslSweepResult {
    pub fn cell(&self, duration_index: usize, cap_index: usize) -> &QslCell {
        &self.cells[duration_index * self.caps.len() + cap_index]
    }

    /// Shortest duration whose best J_T reaches the threshold.
    pub fn qsl(&self, cap_index: usize) -> Option<f64> {
        (0..self.durations.len())
            .find(|&i| self.cell(i, cap_index).best() <= self.threshold)
            .map(|i| self.durations[i])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# threshold={}", self.threshold)?;
        for (j, cap) in self.caps.iter().enumerate() {
            match self.qsl(j) {
                Some(t) => writeln!(w, "# qsl cap_ghz={cap} t_ns={t}")?,
                None => writeln!(w, "# qsl cap_ghz={cap} t_ns=none")?,
            }
        }
        writeln!(w, "t_ns,cap_ghz,best_JT,restart_JT")?;
        for c in &self.cells {
            let restarts: Vec<String> = c.restart_costs.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{},{},{}", c.duration, c.cap, c.best(), restarts.join(";"))?;
        }
        Ok(())
    }
}

/// Randomised guess: a flat top of random height and sign with three random
/// tones, all under the same ramps and clipped to the cap.
pub fn random_guess(rng: &mut impl Rng, duration: f64, dt: f64, cap: f64) -> Result<Pulse> {
    let rise = (duration / 4.0).min(2.0);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let height = sign * rng.random_range(0.1..0.8) * cap;
    let base = make_guess(GuessShape::FlatTop { amplitude: 1.0, rise }, duration, dt)?.into_pulse();
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.0..0.2) * cap, rng.random_range(0.2..2.5), rng.random_range(0.0..TWO_PI)))
        .collect();
    let amps = base
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(k, &env)| {
            let t = k as f64 * dt;
            let osc: f64 = tones.iter().map(|(a, f, phi)| a * (TWO_PI * f * t + phi).sin()).sum();
            (env * (height + osc)).clamp(-cap, cap)
        })
        .collect();
    Pulse::new(dt, amps)
}

/// Best J_T per (duration, cap) over seeded random restarts, in parallel.
pub fn qsl_sweep(params: &SystemParams, config: &QslConfig) -> Result<QslSweepResult> {
    if config.durations.is_empty() || config.caps.is_empty() || config.restarts == 0 {
        return Err(Error::InvalidArgument("QSL sweep needs non-empty grids and at least one restart".into()));
    }
    let problem = ControlProblem::new(params, config.dt)?;
    let (nt, nc, nr) = (config.durations.len(), config.caps.len(), config.restarts);
    let jobs: Vec<(usize, usize, usize)> =
        (0..nt).flat_map(|i| (0..nc).flat_map(move |j| (0..nr).map(move |r| (i, j, r)))).collect();
    let costs: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j, r)| {
            let (duration, cap) = (config.durations[i], config.caps[j]);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(((i as u64) << 42) | ((j as u64) << 21) | r as u64);
            let guess = random_guess(&mut rng, duration, config.dt, cap)?;
            let opt = OptimizerConfig { amp_cap: cap, threshold: config.threshold, snapshot_every: 0, ..config.optimizer.clone() };
            let (_, trace) = grape_optimize(&problem, &guess, &opt)?;
            Ok(trace.final_cost())
        })
        .collect::<Result<_>>()?;
    let cells = (0..nt)
        .flat_map(|i| (0..nc).map(move |j| (i, j)))
        .map(|(i, j)| {
            let start = (i * nc + j) * nr;
            QslCell { duration: config.durations[i], cap: config.caps[j], restart_costs: costs[start..start + nr].to_vec() }
        })
        .collect();
    Ok(QslSweepResult { threshold: config.threshold, durations: config.durations.clone(), caps: config.caps.clone(), cells })
}
