//! Hamiltonian construction and time evolution for two qutrits coupled
//! through a tunable coupler.
//!
//! Basis ordering: full-space index = q1·L² + q2·L + qc for `L` levels per
//! subsystem, kets written |Q1 Q2 Qc⟩. Hamiltonian entries are angular
//! frequencies (rad/ns); configuration values are GHz.

mod lindblad;
mod operators;
mod propagate;
mod sectors;
mod state;

pub use lindblad::{fidelity_state, propagate_lindblad, LindbladTrajectory};
pub use operators::{build_control, build_drift, build_ladder, commutator, embed, number_operator};
pub use propagate::{propagate_full_space, propagate_piecewise, step_propagator, System};
pub use sectors::{excitation_sectors, ExcitationSector};
pub use state::{basis_index, excitation_number, ket_label, DensityMatrix, Statevector};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const TWO_PI: f64 = std::f64::consts::TAU;

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// ‖H − H†‖ entrywise maximum.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// ‖P†P − I‖ entrywise maximum.
pub fn unitarity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - CMatrix::identity(n, n)))
}
