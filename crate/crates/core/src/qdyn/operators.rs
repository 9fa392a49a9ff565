use super::{CMatrix, C64, TWO_PI};
use crate::error::{Error, Result};
use crate::params::SystemParams;

/// Truncated bosonic lowering and raising operators.
pub fn build_ladder(levels: usize) -> Result<(CMatrix, CMatrix)> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("ladder needs at least 2 levels, got {levels}")));
    }
    let mut lower = CMatrix::zeros(levels, levels);
    for m in 0..levels - 1 {
        lower[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    let raise = lower.adjoint();
    Ok((lower, raise))
}

/// Places a single-subsystem operator at `position` (0 = Q1, 1 = Q2, 2 = coupler).
pub fn embed(op: &CMatrix, position: usize, levels: usize) -> CMatrix {
    let id = CMatrix::identity(levels, levels);
    let factors: [&CMatrix; 3] = match position {
        0 => [op, &id, &id],
        1 => [&id, op, &id],
        _ => [&id, &id, op],
    };
    factors[0].kronecker(factors[1]).kronecker(factors[2])
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Total excitation number N = a₁†a₁ + a₂†a₂ + b†b (diagonal).
pub fn number_operator(levels: usize) -> CMatrix {
    let dim = levels.pow(3);
    let diag = (0..dim).map(|i| C64::new(super::excitation_number(levels, i) as f64, 0.0));
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(dim, diag))
}

struct Modes {
    a1: CMatrix,
    a2: CMatrix,
    b: CMatrix,
}

fn modes(levels: usize) -> Result<Modes> {
    let (lower, _) = build_ladder(levels)?;
    Ok(Modes {
        a1: embed(&lower, 0, levels),
        a2: embed(&lower, 1, levels),
        b: embed(&lower, 2, levels),
    })
}

pub(crate) fn lowering_operators(levels: usize) -> Result<[CMatrix; 3]> {
    let m = modes(levels)?;
    Ok([m.a1, m.a2, m.b])
}

/// Static Hamiltonian in the rotating frame, rad/ns.
pub fn build_drift(params: &SystemParams) -> Result<CMatrix> {
    params.validate()?;
    let levels = params.levels;
    let Modes { a1, a2, b } = modes(levels)?;
    let (d1, d2, dc) = params.detunings();
    let real = |x: f64| C64::new(TWO_PI * x, 0.0);

    let bd = b.adjoint();
    let mut h = &bd * &b * real(dc) + &bd * &bd * &b * &b * real(params.alphac / 2.0);
    for (a, detuning, alpha, g) in [
        (&a1, d1, params.alpha1, params.g1),
        (&a2, d2, params.alpha2, params.g2),
    ] {
        let ad = a.adjoint();
        h += &ad * a * real(detuning);
        h += &ad * &ad * a * a * real(alpha / 2.0);
        h += (&bd * a + &b * &ad) * real(g);
    }
    Ok(h)
}

/// Control operator b†b. Dimensionless; the propagator scales it by 2π·u.
pub fn build_control(params: &SystemParams) -> Result<CMatrix> {
    params.validate()?;
    let levels = params.levels;
    let number = nalgebra::DVector::from_iterator(levels, (0..levels).map(|m| C64::new(m as f64, 0.0)));
    Ok(embed(&CMatrix::from_diagonal(&number), 2, levels))
}
