//! Scores for the effective two-qubit gate realised in the logical subspace.
//!
//! Logical basis |00⟩, |01⟩, |10⟩, |11⟩ corresponds to |000⟩, |010⟩, |100⟩,
//! |110⟩ of the full system (coupler in its ground state).

pub mod gates;
mod weyl;

pub use weyl::{gate_concurrence, weyl_coordinates, WeylCoordinates};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qdyn::{basis_index, Statevector, C64};

pub type Gate4 = Matrix4<C64>;

/// Occupations (q1, q2, qc) of the four logical states, in logical order.
pub const LOGICAL_STATES: [[usize; 3]; 4] = [[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]];

/// Smallest singular value below which the polar factor is not taken.
pub const RANK_TOLERANCE: f64 = 1e-8;

pub fn logical_indices(levels: usize) -> [usize; 4] {
    LOGICAL_STATES.map(|[a, b, c]| basis_index(levels, a, b, c))
}

/// Logical-subspace overlaps Ô[i][j] = ⟨i|ψ_j⟩; generally not unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveGate(pub Gate4);

impl EffectiveGate {
    pub fn identity() -> Self {
        Self(Gate4::identity())
    }

    pub fn matrix(&self) -> &Gate4 {
        &self.0
    }

    pub fn column_norms(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.0.column(j).norm())
    }
}

/// Builds Ô from the evolved logical basis states, given in logical order.
pub fn effective_gate(states: [&Statevector; 4]) -> Result<EffectiveGate> {
    let levels = states[0].levels();
    if states.iter().any(|s| s.levels() != levels) {
        return Err(Error::InvalidArgument("evolved states have mixed dimensions".into()));
    }
    let rows = logical_indices(levels);
    Ok(EffectiveGate(Gate4::from_fn(|i, j| states[j].amplitudes()[rows[i]])))
}

/// U = Tr(Ô†Ô)/4.
pub fn unitarity(gate: &EffectiveGate) -> f64 {
    gate.0.iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0
}

/// Polar factor W·V† of Ô = W Σ V†, the unitary nearest to Ô.
pub fn closest_unitary(gate: &EffectiveGate) -> Result<Gate4> {
    let svd = gate.0.svd(true, true);
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > RANK_TOLERANCE) {
        return Err(Error::ConcurrenceUndefined(smallest));
    }
    let (Some(w), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::NumericalInstability("SVD did not converge".into()));
    };
    Ok(w * v_t)
}

/// J_T = 1 − (C/4 + 3U/4).
pub fn cost(concurrence: f64, unitarity: f64) -> f64 {
    1.0 - (0.25 * concurrence + 0.75 * unitarity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub concurrence: f64,
    pub unitarity: f64,
    pub cost: f64,
    /// False when Ô was rank deficient; concurrence is then reported as 0.
    pub concurrence_defined: bool,
}

/// Concurrence of the unitarised gate, unitarity of the raw gate, and J_T.
pub fn gate_metrics(gate: &EffectiveGate) -> GateMetrics {
    let u = unitarity(gate);
    let (c, defined) = match closest_unitary(gate).and_then(|x| gate_concurrence(&x)) {
        Ok(c) => (c, true),
        Err(_) => (0.0, false),
    };
    GateMetrics { concurrence: c, unitarity: u, cost: cost(c, u), concurrence_defined: defined }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdyn::CVector;

    fn max_abs(m: &Gate4) -> f64 {
        m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
    }

    #[test]
    fn unitarity_limits() {
        assert_eq!(unitarity(&EffectiveGate::identity()), 1.0);
        assert_eq!(unitarity(&EffectiveGate(Gate4::zeros())), 0.0);
        let mut g = gates::cnot();
        g.column_mut(2).fill(C64::new(0.0, 0.0));
        assert!((unitarity(&EffectiveGate(g)) - 0.75).abs() < 1e-15);
        assert!((unitarity(&EffectiveGate(gates::sqrt_iswap())) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closest_unitary_cases() {
        let g = gates::sqrt_swap();
        assert!(max_abs(&(closest_unitary(&EffectiveGate(g)).unwrap() - g)) < 1e-12);
        let d = Gate4::from_diagonal(&nalgebra::Vector4::new(2.0, 1.0, 1.0, 1.0).map(|x| C64::new(x, 0.0)));
        assert!(max_abs(&(closest_unitary(&EffectiveGate(d)).unwrap() - Gate4::identity())) < 1e-12);
        let mut singular = Gate4::identity();
        singular[(3, 3)] = C64::new(0.0, 0.0);
        assert!(matches!(closest_unitary(&EffectiveGate(singular)), Err(Error::ConcurrenceUndefined(_))));
        let m = gate_metrics(&EffectiveGate(singular));
        assert!(!m.concurrence_defined);
        assert_eq!(m.concurrence, 0.0);
    }

    #[test]
    fn cost_values() {
        assert_eq!(cost(1.0, 1.0), 0.0);
        assert_eq!(cost(0.0, 1.0), 0.25);
        assert_eq!(cost(1.0, 0.0), 0.75);
        assert!(cost(0.5, 0.9) > cost(0.6, 0.9));
        assert!(cost(0.5, 0.9) > cost(0.5, 0.95));
    }

    #[test]
    fn identity_pipeline() {
        let states: Vec<Statevector> = LOGICAL_STATES.iter().map(|&[a, b, c]| Statevector::basis(3, a, b, c)).collect();
        let gate = effective_gate([&states[0], &states[1], &states[2], &states[3]]).unwrap();
        assert_eq!(gate, EffectiveGate::identity());
        let m = gate_metrics(&gate);
        assert_eq!(m.concurrence, 0.0);
        assert_eq!(m.unitarity, 1.0);
        assert_eq!(m.cost, 0.25);
    }

    #[test]
    fn effective_gate_reads_overlaps() {
        let mut v = CVector::zeros(27);
        v[basis_index(3, 0, 1, 0)] = C64::new(0.0, 0.6);
        v[basis_index(3, 1, 0, 0)] = C64::new(0.8, 0.0);
        let moved = Statevector::new(3, v).unwrap();
        let vac = Statevector::basis(3, 0, 0, 0);
        let s100 = Statevector::basis(3, 1, 0, 0);
        let s110 = Statevector::basis(3, 1, 1, 0);
        let g = effective_gate([&vac, &moved, &s100, &s110]).unwrap();
        assert_eq!(g.0[(1, 1)], C64::new(0.0, 0.6));
        assert_eq!(g.0[(2, 1)], C64::new(0.8, 0.0));
        assert_eq!(g.column_norms()[0], 1.0);
    }
}
