//! State-value network and its Adam optimiser.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self { net: Mlp::new(&sizes, 1.0, rng) }
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        self.net.set_params(flat)
    }

    pub fn predict(&self, obs: &DMatrix<f64>) -> Vec<f64> {
        self.net.forward(obs).0.row(0).iter().cloned().collect()
    }

    pub fn predict_one(&self, obs: &[f64]) -> f64 {
        self.net.forward_one(obs)[0]
    }

    /// Mean squared error against `targets` and its flat gradient.
    pub fn mse_and_gradient(&self, obs: &DMatrix<f64>, targets: &[f64]) -> (f64, Vec<f64>) {
        let (pred, cache) = self.net.forward(obs);
        let n = targets.len() as f64;
        let resid = DMatrix::from_fn(1, targets.len(), |_, j| pred[(0, j)] - targets[j]);
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let grad = self.net.backward(&cache, &(resid * (2.0 / n)));
        (loss, grad)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
