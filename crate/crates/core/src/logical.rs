//! The excitation blocks that carry the computational states.
//!
//! |000⟩ is stationary, |010⟩ and |100⟩ live in the N=1 block and |110⟩ in the
//! N=2 block, so the effective gate is assembled from one 2×2 and one 1×1
//! sub-block of the two sector propagators.

use crate::error::{Error, Result};
use crate::metrics::{EffectiveGate, Gate4};
use crate::params::SystemParams;
use crate::qdyn::{basis_index, CMatrix, CVector, ExcitationSector, System, C64};

/// Gate entries that can differ from the vacuum phase, as
/// (row, column) of Ô followed by (sector, row, column) in the blocks.
pub(crate) const ENTRIES: usize = 5;

#[derive(Debug, Clone)]
pub struct LogicalBlocks {
    single: ExcitationSector,
    double: ExcitationSector,
    pos_010: usize,
    pos_100: usize,
    pos_110: usize,
}

impl LogicalBlocks {
    pub fn new(params: &SystemParams) -> Result<Self> {
        let system = System::new(*params)?;
        let levels = params.levels;
        let missing = || Error::SectorDecompositionUnavailable(f64::NAN);
        let single = system.sector(1).ok_or_else(missing)?.clone();
        let double = system.sector(2).ok_or_else(missing)?.clone();
        let pos = |s: &ExcitationSector, q: [usize; 3]| {
            s.position(basis_index(levels, q[0], q[1], q[2])).expect("logical state lies in its sector")
        };
        Ok(Self {
            pos_010: pos(&single, [0, 1, 0]),
            pos_100: pos(&single, [1, 0, 0]),
            pos_110: pos(&double, [1, 1, 0]),
            single,
            double,
        })
    }

    pub fn single(&self) -> &ExcitationSector {
        &self.single
    }

    pub fn double(&self) -> &ExcitationSector {
        &self.double
    }

    /// Positions of |010⟩ and |100⟩ in the N=1 block.
    pub fn single_positions(&self) -> [usize; 2] {
        [self.pos_010, self.pos_100]
    }

    /// Position of |110⟩ in the N=2 block.
    pub fn double_position(&self) -> usize {
        self.pos_110
    }

    /// Initial block states (|010⟩, |100⟩, |110⟩).
    pub fn initial_states(&self) -> (CVector, CVector, CVector) {
        let unit = |dim: usize, k: usize| {
            let mut v = CVector::zeros(dim);
            v[k] = C64::new(1.0, 0.0);
            v
        };
        (
            unit(self.single.dim(), self.pos_010),
            unit(self.single.dim(), self.pos_100),
            unit(self.double.dim(), self.pos_110),
        )
    }

    /// Ô from the propagated block states.
    pub fn gate_from_states(&self, s010: &CVector, s100: &CVector, s110: &CVector) -> EffectiveGate {
        let [a, b] = self.single_positions();
        entries_to_gate([s010[a], s100[a], s010[b], s100[b], s110[self.pos_110]])
    }

    /// Ô from full block propagators.
    pub fn gate_from_propagators(&self, u1: &CMatrix, u2: &CMatrix) -> EffectiveGate {
        let [a, b] = self.single_positions();
        let c = self.pos_110;
        entries_to_gate([u1[(a, a)], u1[(a, b)], u1[(b, a)], u1[(b, b)], u2[(c, c)]])
    }
}

/// Entries ordered as Ô₁₁, Ô₁₂, Ô₂₁, Ô₂₂, Ô₃₃.
pub(crate) fn entries_to_gate(e: [C64; ENTRIES]) -> EffectiveGate {
    let mut g = Gate4::zeros();
    g[(0, 0)] = C64::new(1.0, 0.0);
    g[(1, 1)] = e[0];
    g[(1, 2)] = e[1];
    g[(2, 1)] = e[2];
    g[(2, 2)] = e[3];
    g[(3, 3)] = e[4];
    EffectiveGate(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::effective_gate;
    use crate::pulse::Pulse;
    use crate::qdyn::{propagate_full_space, step_propagator, Statevector};

    #[test]
    fn block_gate_matches_full_space() {
        let params = SystemParams::default();
        let blocks = LogicalBlocks::new(&params).unwrap();
        let system = System::new(params).unwrap();
        let amps: Vec<f64> = (0..40).map(|k| 0.8 * (0.3 * k as f64).sin()).collect();
        let pulse = Pulse::new(0.05, amps.clone()).unwrap();

        let mut u1 = CMatrix::identity(3, 3);
        let mut u2 = CMatrix::identity(6, 6);
        for &u in &amps {
            u1 = step_propagator(&blocks.single().drift, &blocks.single().control, u, 0.05).unwrap() * u1;
            u2 = step_propagator(&blocks.double().drift, &blocks.double().control, u, 0.05).unwrap() * u2;
        }
        let from_blocks = blocks.gate_from_propagators(&u1, &u2);

        let finals: Vec<Statevector> = [[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]]
            .iter()
            .map(|q| {
                let traj = propagate_full_space(&system, &pulse, &Statevector::basis(3, q[0], q[1], q[2])).unwrap();
                traj.last().unwrap().clone()
            })
            .collect();
        let full = effective_gate([&finals[0], &finals[1], &finals[2], &finals[3]]).unwrap();
        let err = (full.matrix() - from_blocks.matrix()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        assert!(err < 1e-10, "{err}");
    }
}
