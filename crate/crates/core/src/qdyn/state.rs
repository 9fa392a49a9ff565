use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use super::{CMatrix, CVector, C64};
use crate::error::{Error, Result};

/// Full-space index of |q1 q2 qc⟩.
pub fn basis_index(levels: usize, q1: usize, q2: usize, qc: usize) -> usize {
    q1 * levels * levels + q2 * levels + qc
}

/// Occupation digits (q1, q2, qc) of a full-space index.
pub fn occupations(levels: usize, index: usize) -> [usize; 3] {
    [index / (levels * levels), (index / levels) % levels, index % levels]
}

/// Total excitation number of a full-space basis state.
pub fn excitation_number(levels: usize, index: usize) -> usize {
    occupations(levels, index).iter().sum()
}

/// Ket label such as `|110⟩`.
pub fn ket_label(levels: usize, index: usize) -> String {
    let [a, b, c] = occupations(levels, index);
    format!("|{a}{b}{c}⟩")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    levels: usize,
    amplitudes: CVector,
}

impl Statevector {
    pub fn new(levels: usize, amplitudes: CVector) -> Result<Self> {
        let dim = levels.pow(3);
        if amplitudes.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "statevector length {} does not match {levels} levels (dim {dim})",
                amplitudes.len()
            )));
        }
        Ok(Self { levels, amplitudes })
    }

    pub fn basis(levels: usize, q1: usize, q2: usize, qc: usize) -> Self {
        let mut amplitudes = CVector::zeros(levels.pow(3));
        amplitudes[basis_index(levels, q1, q2, qc)] = C64::new(1.0, 0.0);
        Self { levels, amplitudes }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, q1: usize, q2: usize, qc: usize) -> C64 {
        self.amplitudes[basis_index(self.levels, q1, q2, qc)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn inner(&self, other: &Statevector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Excitation numbers carrying non-zero amplitude.
    pub fn support_sectors(&self) -> Vec<usize> {
        let mut sectors: Vec<usize> = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm_sqr() > 0.0)
            .map(|(i, _)| excitation_number(self.levels, i))
            .collect();
        sectors.sort_unstable();
        sectors.dedup();
        sectors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    levels: usize,
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(levels: usize, entries: CMatrix) -> Result<Self> {
        let dim = levels.pow(3);
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "density matrix must be {dim}x{dim} for {levels} levels"
            )));
        }
        Ok(Self { levels, entries })
    }

    pub fn pure(state: &Statevector) -> Self {
        let v = state.amplitudes();
        Self { levels: state.levels(), entries: v * v.adjoint() }
    }

    pub fn maximally_mixed(levels: usize) -> Self {
        let dim = levels.pow(3);
        Self {
            levels,
            entries: CMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0),
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.entries[(index, index)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        super::hermiticity_error(&self.entries)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}
