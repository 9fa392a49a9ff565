use super::sectors::restrict;
use super::{
    build_control, build_drift, excitation_number, excitation_sectors, CMatrix, CVector,
    ExcitationSector, Statevector, C64, TWO_PI,
};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::pulse::Pulse;

/// Norm drift beyond which a trajectory is declared diverged.
pub(crate) const NORM_DIVERGENCE: f64 = 1e-6;

/// A parameterised system with its operators and, when excitation number is
/// conserved, the sector decomposition.
#[derive(Debug, Clone)]
pub struct System {
    params: SystemParams,
    drift: CMatrix,
    control: CMatrix,
    sectors: Option<Vec<ExcitationSector>>,
}

impl System {
    pub fn new(params: SystemParams) -> Result<Self> {
        let drift = build_drift(&params)?;
        let control = build_control(&params)?;
        Ok(Self::from_operators(params, drift, control))
    }

    /// Uses caller-supplied operators; the sector split is attempted and
    /// silently dropped when they do not conserve excitations.
    pub fn from_operators(params: SystemParams, drift: CMatrix, control: CMatrix) -> Self {
        let levels = params.levels;
        let sectors = excitation_sectors(&drift, &control, levels, 3 * (levels - 1)).ok();
        Self { params, drift, control, sectors }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn levels(&self) -> usize {
        self.params.levels
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn control(&self) -> &CMatrix {
        &self.control
    }

    pub fn sectors(&self) -> Option<&[ExcitationSector]> {
        self.sectors.as_deref()
    }

    pub fn sector(&self, excitations: usize) -> Option<&ExcitationSector> {
        self.sectors()?.iter().find(|s| s.excitations == excitations)
    }

    /// Drift and control restricted to the given full-space indices.
    pub(crate) fn restricted(&self, basis: &[usize]) -> (CMatrix, CMatrix) {
        (restrict(&self.drift, basis), restrict(&self.control, basis))
    }
}

/// exp(−i(H₀ + 2π·u·H₁)·dt) for a constant amplitude `u` in GHz.
pub fn step_propagator(drift: &CMatrix, control: &CMatrix, u: f64, dt: f64) -> Result<CMatrix> {
    if !u.is_finite() {
        return Err(Error::NumericalInstability(format!("non-finite control amplitude {u}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let generator = (drift + control * C64::new(TWO_PI * u, 0.0)) * C64::new(0.0, -dt);
    Ok(generator.exp())
}

pub(crate) fn evolve(
    drift: &CMatrix,
    control: &CMatrix,
    pulse: &Pulse,
    initial: CVector,
) -> Result<Vec<CVector>> {
    let norm0 = initial.norm();
    let mut out = Vec::with_capacity(pulse.len() + 1);
    out.push(initial);
    for &u in pulse.amplitudes() {
        let p = step_propagator(drift, control, u, pulse.dt())?;
        let next = p * out.last().expect("trajectory is non-empty");
        let norm = next.norm();
        if !norm.is_finite() || (norm - norm0).abs() > NORM_DIVERGENCE {
            return Err(Error::PropagationDiverged(format!(
                "norm {norm} after {} steps",
                out.len()
            )));
        }
        out.push(next);
    }
    Ok(out)
}

fn check_initial(system: &System, initial: &Statevector) -> Result<()> {
    if initial.dim() != system.dim() {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match system dimension {}",
            initial.dim(),
            system.dim()
        )));
    }
    if (initial.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("initial state norm {} != 1", initial.norm())));
    }
    Ok(())
}

fn wrap(levels: usize, vectors: Vec<CVector>) -> Vec<Statevector> {
    vectors
        .into_iter()
        .map(|v| Statevector::new(levels, v).expect("dimension preserved"))
        .collect()
}

/// Full-space propagation, ignoring any sector structure.
pub fn propagate_full_space(
    system: &System,
    pulse: &Pulse,
    initial: &Statevector,
) -> Result<Vec<Statevector>> {
    check_initial(system, initial)?;
    let traj = evolve(system.drift(), system.control(), pulse, initial.amplitudes().clone())?;
    Ok(wrap(system.levels(), traj))
}

/// Piecewise-constant Schrödinger propagation. Element `k` of the result is
/// the state after `k` steps. States confined to one excitation sector are
/// propagated inside that block.
pub fn propagate_piecewise(
    system: &System,
    pulse: &Pulse,
    initial: &Statevector,
) -> Result<Vec<Statevector>> {
    check_initial(system, initial)?;
    let support = initial.support_sectors();
    let sector = match (system.sectors(), support.as_slice()) {
        (Some(_), [n]) => system.sector(*n),
        _ => None,
    };
    let Some(sector) = sector else {
        return propagate_full_space(system, pulse, initial);
    };

    let levels = system.levels();
    let v0 = CVector::from_iterator(
        sector.dim(),
        sector.basis.iter().map(|&i| initial.amplitudes()[i]),
    );
    let block_traj = evolve(&sector.drift, &sector.control, pulse, v0)?;
    let dim = system.dim();
    let full = block_traj
        .into_iter()
        .map(|b| {
            let mut v = CVector::zeros(dim);
            for (k, &i) in sector.basis.iter().enumerate() {
                v[i] = b[k];
            }
            debug_assert!(sector.basis.iter().all(|&i| excitation_number(levels, i) == sector.excitations));
            v
        })
        .collect();
    Ok(wrap(levels, full))
}
