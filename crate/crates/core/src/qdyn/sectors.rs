use super::{commutator, excitation_number, max_abs, number_operator, CMatrix};
use crate::error::{Error, Result};

/// Restriction of the drift and control operators to a fixed total
/// excitation number.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSector {
    pub excitations: usize,
    /// Full-space indices spanning the sector, ascending.
    pub basis: Vec<usize>,
    pub drift: CMatrix,
    pub control: CMatrix,
}

impl ExcitationSector {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Position of a full-space index inside the sector basis.
    pub fn position(&self, full_index: usize) -> Option<usize> {
        self.basis.iter().position(|&i| i == full_index)
    }
}

pub(crate) const COMMUTATOR_TOL: f64 = 1e-12;

pub(crate) fn restrict(m: &CMatrix, basis: &[usize]) -> CMatrix {
    CMatrix::from_fn(basis.len(), basis.len(), |r, c| m[(basis[r], basis[c])])
}

/// Splits the Hamiltonian into blocks of fixed excitation number N = 0..=max_n.
pub fn excitation_sectors(
    drift: &CMatrix,
    control: &CMatrix,
    levels: usize,
    max_n: usize,
) -> Result<Vec<ExcitationSector>> {
    let dim = levels.pow(3);
    if drift.nrows() != dim || control.nrows() != dim {
        return Err(Error::InvalidArgument(format!(
            "operators must be {dim}x{dim} for {levels} levels"
        )));
    }
    let n = number_operator(levels);
    let worst = max_abs(&commutator(drift, &n)).max(max_abs(&commutator(control, &n)));
    if worst > COMMUTATOR_TOL {
        return Err(Error::SectorDecompositionUnavailable(worst));
    }
    Ok((0..=max_n)
        .map(|excitations| {
            let basis: Vec<usize> =
                (0..dim).filter(|&i| excitation_number(levels, i) == excitations).collect();
            ExcitationSector {
                excitations,
                drift: restrict(drift, &basis),
                control: restrict(control, &basis),
                basis,
            }
        })
        .filter(|s| !s.basis.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;
    use crate::qdyn::{basis_index, build_control, build_drift, C64};

    fn sectors() -> Vec<ExcitationSector> {
        let p = SystemParams::default();
        excitation_sectors(&build_drift(&p).unwrap(), &build_control(&p).unwrap(), 3, 2).unwrap()
    }

    #[test]
    fn sector_dimensions_and_bases() {
        let s = sectors();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].basis, vec![0]);
        assert_eq!(s[0].drift[(0, 0)], C64::new(0.0, 0.0));
        let k = |a, b, c| basis_index(3, a, b, c);
        assert_eq!(s[1].basis, vec![k(0, 0, 1), k(0, 1, 0), k(1, 0, 0)]);
        assert_eq!(
            s[2].basis,
            vec![k(0, 0, 2), k(0, 1, 1), k(0, 2, 0), k(1, 0, 1), k(1, 1, 0), k(2, 0, 0)]
        );
    }

    #[test]
    fn blocks_are_restrictions() {
        let p = SystemParams::default();
        let h0 = build_drift(&p).unwrap();
        for s in sectors() {
            for (r, &i) in s.basis.iter().enumerate() {
                for (c, &j) in s.basis.iter().enumerate() {
                    assert_eq!(s.drift[(r, c)], h0[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn non_conserving_drift_is_rejected() {
        let p = SystemParams::default();
        let mut h0 = build_drift(&p).unwrap();
        // counter-rotating term linking |000⟩ and |011⟩
        let (i, j) = (0, basis_index(3, 0, 1, 1));
        h0[(i, j)] = C64::new(0.3, 0.0);
        h0[(j, i)] = C64::new(0.3, 0.0);
        let err = excitation_sectors(&h0, &build_control(&p).unwrap(), 3, 2).unwrap_err();
        assert!(matches!(err, Error::SectorDecompositionUnavailable(_)));
    }
}
