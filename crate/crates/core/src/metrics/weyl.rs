//! Weyl-chamber coordinates and gate concurrence via magic-basis eigenphases.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use super::Gate4;
use crate::error::{Error, Result};
use crate::qdyn::C64;

const UNITARY_TOL: f64 = 1e-8;
const PE_SLACK: f64 = 1e-9;

/// Canonical nonlocal coordinates with π/4 ≥ c1 ≥ c2 ≥ c3 ≥ 0, in the convention
/// where CNOT sits at (π/4, 0, 0) and SWAP at (π/4, π/4, π/4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylCoordinates {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl WeylCoordinates {
    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }

    /// Membership in the perfect-entangler polyhedron.
    pub fn is_perfect_entangler(&self) -> bool {
        let Self { c1, c2, c3 } = *self;
        c1 + c2 >= FRAC_PI_4 - PE_SLACK && c1 - c2 <= FRAC_PI_4 + PE_SLACK && c2 + c3 <= FRAC_PI_4 + PE_SLACK
    }
}

fn magic_basis() -> Gate4 {
    let s = FRAC_1_SQRT_2;
    let (o, r, i) = (C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(0.0, s));
    let rows = [[r, o, o, i], [o, i, r, o], [o, i, -r, o], [r, o, o, -i]];
    Gate4::from_fn(|a, b| rows[a][b])
}

/// Eigenvalues of a complex symmetric unitary. Its real and imaginary parts
/// are commuting real symmetric matrices, so a generic real combination of
/// them shares their orthogonal eigenbasis.
fn symmetric_unitary_eigenvalues(m: &Gate4) -> Result<[C64; 4]> {
    let re = m.map(|z| z.re);
    let im = m.map(|z| z.im);
    let scale = 1.0 + m.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    for r in [0.6180339887, 1.4142135623, 2.7182818284, 0.3183098861, 4.6692016091, 0.5772156649] {
        let eig = SymmetricEigen::new(re + im * r);
        let p = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let d: Matrix4<C64> = p.transpose() * m * p;
        let off = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .fold(0.0_f64, |a, (i, j)| a.max(d[(i, j)].norm()));
        if off <= 1e-10 * scale {
            return Ok(std::array::from_fn(|k| d[(k, k)]));
        }
    }
    let schur = nalgebra::Schur::new(*m);
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::NumericalInstability("eigenvalues of magic-basis matrix".into()))?;
    Ok(std::array::from_fn(|k| ev[k]))
}

fn check_unitary(u: &Gate4) -> Result<()> {
    let err = (u.adjoint() * u - Gate4::identity()).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if !(err <= UNITARY_TOL) {
        return Err(Error::InvalidArgument(format!("gate is not unitary (error {err:e})")));
    }
    Ok(())
}

pub fn weyl_coordinates(u: &Gate4) -> Result<WeylCoordinates> {
    check_unitary(u)?;
    let det = u.determinant();
    let u = u / C64::from_polar(det.norm().powf(0.25), det.arg() / 4.0);
    let q = magic_basis();
    let ub = q.adjoint() * u * q;
    let m = ub.transpose() * ub;

    // Eigenphases in units of π, folded into (−1/2, 3/2].
    let mut half: Vec<f64> = symmetric_unitary_eigenvalues(&m)?
        .iter()
        .map(|z| {
            let x = z.arg() / PI;
            (if x <= -0.5 { x + 2.0 } else { x }) / 2.0
        })
        .collect();
    half.sort_by(|a, b| b.total_cmp(a));
    let n = half.iter().sum::<f64>().round().clamp(0.0, 4.0) as usize;
    for x in half.iter_mut().take(n) {
        *x -= 1.0;
    }
    half.rotate_left(n % 4);

    let mut c1 = half[0] + half[1];
    let c2 = half[0] + half[2];
    let mut c3 = half[1] + half[2];
    if c3 < 0.0 {
        c1 = 1.0 - c1;
        c3 = -c3;
    }
    // Halve into the (π/4, 0, 0) = CNOT convention.
    let mut w = WeylCoordinates { c1: c1 * FRAC_PI_2, c2: (c2 * FRAC_PI_2).max(0.0), c3: (c3 * FRAC_PI_2).max(0.0) };
    // Mirror identification: (c1, c2, c3) and (π/2 − c1, c2, c3) share
    // concurrence and perfect-entangler membership; a gate and its complex
    // conjugate land on the same point.
    if w.c1 > FRAC_PI_4 {
        w.c1 = FRAC_PI_2 - w.c1;
    }
    Ok(w)
}

/// Maximal concurrence producible from product inputs: 1 inside the
/// perfect-entangler polyhedron, otherwise max |sin 2(c_i ± c_j)|.
pub fn gate_concurrence(u: &Gate4) -> Result<f64> {
    let w = weyl_coordinates(u)?;
    if w.is_perfect_entangler() {
        return Ok(1.0);
    }
    let c = w.as_array();
    let mut best = 0.0_f64;
    for i in 0..3 {
        for j in i + 1..3 {
            best = best.max((2.0 * (c[i] + c[j])).sin().abs());
            best = best.max((2.0 * (c[i] - c[j])).sin().abs());
        }
    }
    Ok(best.min(1.0))
}
