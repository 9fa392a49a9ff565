//! Named two-qubit gates in the logical basis |00⟩, |01⟩, |10⟩, |11⟩.

use nalgebra::Matrix2;
use std::f64::consts::FRAC_1_SQRT_2;

use super::Gate4;
use crate::qdyn::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn from_rows(rows: [[C64; 4]; 4]) -> Gate4 {
    Gate4::from_fn(|i, j| rows[i][j])
}

pub fn identity() -> Gate4 {
    Gate4::identity()
}

pub fn cnot() -> Gate4 {
    let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
    from_rows([[l, o, o, o], [o, l, o, o], [o, o, o, l], [o, o, l, o]])
}

pub fn swap() -> Gate4 {
    let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
    from_rows([[l, o, o, o], [o, o, l, o], [o, l, o, o], [o, o, o, l]])
}

pub fn iswap() -> Gate4 {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    from_rows([[l, o, o, o], [o, o, i, o], [o, i, o, o], [o, o, o, l]])
}

pub fn sqrt_swap() -> Gate4 {
    let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
    let (p, m) = (c(0.5, 0.5), c(0.5, -0.5));
    from_rows([[l, o, o, o], [o, p, m, o], [o, m, p, o], [o, o, o, l]])
}

pub fn sqrt_iswap() -> Gate4 {
    let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
    let (r, i) = (c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2));
    from_rows([[l, o, o, o], [o, r, i, o], [o, i, r, o], [o, o, o, l]])
}

/// diag(1, 1, 1, e^{iφ}).
pub fn cphase(phi: f64) -> Gate4 {
    let mut g = Gate4::identity();
    g[(3, 3)] = C64::from_polar(1.0, phi);
    g
}

/// k₁ ⊗ k₂ with k₁ acting on the first (most significant) qubit.
pub fn local(k1: &Matrix2<C64>, k2: &Matrix2<C64>) -> Gate4 {
    Gate4::from_fn(|i, j| k1[(i / 2, j / 2)] * k2[(i % 2, j % 2)])
}
