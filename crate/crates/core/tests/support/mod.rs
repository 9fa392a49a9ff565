//! Test-only oracles shared by integration tests. Nothing here calls into
//! the concurrence or Weyl-coordinate code it is used to check.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn ginibre4<R: Rng>(rng: &mut R) -> Matrix4<C64> {
    Matrix4::from_fn(|_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar-distributed 4×4 unitary (QR of a Ginibre matrix with phase fix).
pub fn haar4<R: Rng>(rng: &mut R) -> Matrix4<C64> {
    let qr = ginibre4(rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = Matrix4::from_diagonal(&Vector4::from_fn(|i, _| {
        let d = r[(i, i)];
        d / d.norm()
    }));
    q * phases
}

pub fn haar2<R: Rng>(rng: &mut R) -> Matrix2<C64> {
    let g = Matrix2::from_fn(|_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    q * Matrix2::from_diagonal(&nalgebra::Vector2::from_fn(|i, _| r[(i, i)] / r[(i, i)].norm()))
}

pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

fn qubit(theta: f64, phi: f64) -> [C64; 2] {
    [C64::new((theta / 2.0).cos(), 0.0), C64::from_polar((theta / 2.0).sin(), phi)]
}

/// Concurrence of U(|ψ₁⟩⊗|ψ₂⟩) for Bloch angles x = (θ₁, φ₁, θ₂, φ₂).
fn output_concurrence(u: &Matrix4<C64>, x: &[f64; 4]) -> f64 {
    let a = qubit(x[0], x[1]);
    let b = qubit(x[2], x[3]);
    let psi = Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]);
    let out = u * psi;
    2.0 * (out[0] * out[3] - out[1] * out[2]).norm()
}

/// Maximum output concurrence over product inputs: uniform sampling on both
/// Bloch spheres followed by a shrinking pattern search from the best seeds.
pub fn brute_force_concurrence<R: Rng>(u: &Matrix4<C64>, samples: usize, rng: &mut R) -> f64 {
    let mut seeds: Vec<(f64, [f64; 4])> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = [
            rng.random::<f64>().mul_add(2.0, -1.0).acos(),
            rng.random::<f64>() * std::f64::consts::TAU,
            rng.random::<f64>().mul_add(2.0, -1.0).acos(),
            rng.random::<f64>() * std::f64::consts::TAU,
        ];
        seeds.push((output_concurrence(u, &x), x));
    }
    seeds.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = seeds[0].0;
    for (mut value, mut x) in seeds.into_iter().take(8) {
        let mut step = 0.2;
        while step > 1e-9 {
            let mut improved = false;
            for k in 0..4 {
                for sign in [1.0, -1.0] {
                    let mut y = x;
                    y[k] += sign * step;
                    let v = output_concurrence(u, &y);
                    if v > value {
                        value = v;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(value);
    }
    best
}
