//! Open-system evolution under amplitude damping.
//!
//! Each constant-amplitude step is integrated in the interaction picture of
//! that step's Hamiltonian: the coherent part is applied through its exact
//! exponential and the dissipator by a classic fourth-order Runge-Kutta
//! stage. With damping disabled the scheme reduces to exact unitary
//! conjugation.

use super::operators::lowering_operators;
use super::sectors::restrict;
use super::{excitation_number, CMatrix, DensityMatrix, Statevector, System, C64, TWO_PI};
use crate::error::{Error, Result};
use crate::params::NoiseConfig;
use crate::pulse::Pulse;

const TRACE_DIVERGENCE: f64 = 1e-5;
const SUBSTEPS_ON_DRIFT: usize = 4;

/// Density-matrix trajectory stored on the subspace reachable from the
/// initial state. Damping only lowers the excitation number, so for a
/// number-conserving Hamiltonian the span of sectors N ≤ N_max(ρ₀) is closed.
#[derive(Debug, Clone)]
pub struct LindbladTrajectory {
    levels: usize,
    basis: Vec<usize>,
    states: Vec<CMatrix>,
}

impl LindbladTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Full-space indices of the stored subspace.
    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn reduced(&self, k: usize) -> &CMatrix {
        &self.states[k]
    }

    pub fn full(&self, k: usize) -> DensityMatrix {
        let dim = self.levels.pow(3);
        let mut m = CMatrix::zeros(dim, dim);
        let r = &self.states[k];
        for (a, &i) in self.basis.iter().enumerate() {
            for (b, &j) in self.basis.iter().enumerate() {
                m[(i, j)] = r[(a, b)];
            }
        }
        DensityMatrix::new(self.levels, m).expect("dimension matches levels")
    }

    pub fn trace(&self, k: usize) -> C64 {
        self.states[k].trace()
    }

    pub fn hermiticity_error(&self, k: usize) -> f64 {
        super::hermiticity_error(&self.states[k])
    }

    pub fn min_eigenvalue(&self, k: usize) -> f64 {
        let r = &self.states[k];
        let h = (r + r.adjoint()) * C64::new(0.5, 0.0);
        nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// |⟨ψ|ρ_k|ψ⟩| without materialising the full matrix.
    pub fn fidelity(&self, k: usize, ideal: &Statevector) -> f64 {
        let psi = nalgebra::DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|&i| ideal.amplitudes()[i]),
        );
        (psi.adjoint() * &self.states[k] * &psi)[(0, 0)].norm()
    }
}

/// |⟨ψ|ρ|ψ⟩|.
pub fn fidelity_state(ideal: &Statevector, noisy: &DensityMatrix) -> Result<f64> {
    if ideal.dim() != noisy.entries().nrows() {
        return Err(Error::InvalidArgument("state and density matrix dimensions differ".into()));
    }
    let psi = ideal.amplitudes();
    Ok((psi.adjoint() * noisy.entries() * psi)[(0, 0)].norm())
}

fn reachable_basis(system: &System, rho: &CMatrix) -> Vec<usize> {
    let dim = system.dim();
    if system.sectors().is_none() {
        return (0..dim).collect();
    }
    let levels = system.levels();
    let occupied = (0..dim).filter(|&i| {
        (0..dim).any(|j| rho[(i, j)].norm_sqr() > 0.0 || rho[(j, i)].norm_sqr() > 0.0)
    });
    let n_max = occupied.map(|i| excitation_number(levels, i)).max().unwrap_or(0);
    (0..dim).filter(|&i| excitation_number(levels, i) <= n_max).collect()
}

struct Dissipator {
    jumps: Vec<CMatrix>,
    jumps_dag: Vec<CMatrix>,
    half_decay: CMatrix,
}

impl Dissipator {
    fn new(jumps: Vec<CMatrix>) -> Option<Self> {
        let first = jumps.first()?;
        let n = first.nrows();
        let mut decay = CMatrix::zeros(n, n);
        for l in &jumps {
            decay += l.adjoint() * l;
        }
        Some(Self {
            jumps_dag: jumps.iter().map(|l| l.adjoint()).collect(),
            jumps,
            half_decay: decay * C64::new(0.5, 0.0),
        })
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = -(&self.half_decay * rho + rho * &self.half_decay);
        for (l, ld) in self.jumps.iter().zip(&self.jumps_dag) {
            out += l * rho * ld;
        }
        out
    }

    /// Dissipator seen from a frame rotated by `u`: U† D[U x U†] U.
    fn apply_in_frame(&self, u: &CMatrix, x: &CMatrix) -> CMatrix {
        let ud = u.adjoint();
        &ud * self.apply(&(u * x * &ud)) * u
    }
}

fn step(
    drift: &CMatrix,
    control: &CMatrix,
    dissipator: Option<&Dissipator>,
    u: f64,
    dt: f64,
    rho: &CMatrix,
) -> CMatrix {
    let h = drift + control * C64::new(TWO_PI * u, 0.0);
    let half = (&h * C64::new(0.0, -dt / 2.0)).exp();
    let full = &half * &half;
    let rotated = match dissipator {
        None => rho.clone(),
        Some(d) => {
            let c = |x: f64| C64::new(x, 0.0);
            let k1 = d.apply(rho);
            let k2 = d.apply_in_frame(&half, &(rho + &k1 * c(dt / 2.0)));
            let k3 = d.apply_in_frame(&half, &(rho + &k2 * c(dt / 2.0)));
            let k4 = d.apply_in_frame(&full, &(rho + &k3 * c(dt)));
            rho + (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0)
        }
    };
    &full * rotated * full.adjoint()
}

/// Lindblad evolution with collapse operators √(1/T₁)·{a₁, a₂, b}.
pub fn propagate_lindblad(
    system: &System,
    pulse: &Pulse,
    noise: &NoiseConfig,
    initial: &DensityMatrix,
) -> Result<LindbladTrajectory> {
    let rho0 = initial.entries();
    if rho0.nrows() != system.dim() {
        return Err(Error::InvalidArgument("density matrix dimension mismatch".into()));
    }
    if (initial.trace().re - 1.0).abs() > 1e-8 || initial.hermiticity_error() > 1e-10 {
        return Err(Error::InvalidArgument("initial density matrix must be Hermitian with unit trace".into()));
    }
    let basis = reachable_basis(system, rho0);
    let (drift, control) = system.restricted(&basis);

    let dissipator = if noise.is_enabled() {
        noise.validate()?;
        let rate = C64::new(noise.rate_per_ns().sqrt(), 0.0);
        let enabled = [noise.damp_qubit1, noise.damp_qubit2, noise.damp_coupler];
        let jumps = lowering_operators(system.levels())?
            .into_iter()
            .zip(enabled)
            .filter(|(_, on)| *on)
            .map(|(l, _)| restrict(&l, &basis) * rate)
            .collect();
        Dissipator::new(jumps)
    } else {
        None
    };

    let mut states = Vec::with_capacity(pulse.len() + 1);
    states.push(restrict(rho0, &basis));
    for (k, &u) in pulse.amplitudes().iter().enumerate() {
        if !u.is_finite() {
            return Err(Error::NumericalInstability(format!("non-finite amplitude at step {k}")));
        }
        let prev = states.last().expect("non-empty");
        let before = prev.trace();
        let mut next = step(&drift, &control, dissipator.as_ref(), u, pulse.dt(), prev);
        if (next.trace() - before).norm() > TRACE_DIVERGENCE {
            let sub_dt = pulse.dt() / SUBSTEPS_ON_DRIFT as f64;
            next = prev.clone();
            for _ in 0..SUBSTEPS_ON_DRIFT {
                next = step(&drift, &control, dissipator.as_ref(), u, sub_dt, &next);
            }
        }
        let drift_now = (next.trace() - before).norm();
        if !drift_now.is_finite() || drift_now > TRACE_DIVERGENCE {
            return Err(Error::PropagationDiverged(format!("trace drift {drift_now:e} at step {k}")));
        }
        states.push(next);
    }
    Ok(LindbladTrajectory { levels: system.levels(), basis, states })
}
