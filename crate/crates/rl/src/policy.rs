//! Diagonal Gaussian policy over normalised actions.
//!
//! The mean is tanh of the network output, so it lies in (−1, 1); the
//! environment receives `delta_cap · clip(a, −1, 1)`. The log standard
//! deviation is a free, state-independent vector. Flat parameters are the
//! network parameters followed by the log standard deviations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{Cache, Mlp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    net: Mlp,
    log_std: DVector<f64>,
}

/// Means of a batch together with the network cache needed for gradients.
pub struct PolicyEval {
    pub mean: DMatrix<f64>,
    cache: Cache,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, hidden: &[usize], log_std_init: f64, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Self { net: Mlp::new(&sizes, 0.01, rng), log_std: DVector::from_element(act_dim, log_std_init) }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> &DVector<f64> {
        &self.log_std
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params();
        p.extend_from_slice(self.log_std.as_slice());
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let n = self.net.num_params();
        self.net.set_params(&flat[..n]);
        self.log_std.as_mut_slice().copy_from_slice(&flat[n..]);
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.net.forward_one(obs).iter().map(|z| z.tanh()).collect()
    }

    pub fn evaluate(&self, obs: &DMatrix<f64>) -> PolicyEval {
        let (z, cache) = self.net.forward(obs);
        PolicyEval { mean: z.map(f64::tanh), cache }
    }

    /// Samples (or takes the mean of) the action distribution; returns the
    /// normalised action and its log-density.
    pub fn act<R: Rng>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> (Vec<f64>, f64) {
        let mean = self.mean(obs);
        let action: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(self.log_std.iter())
                .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let lp = log_density(&mean, &self.log_std, &action);
        (action, lp)
    }

    pub fn log_probs(&self, eval: &PolicyEval, actions: &DMatrix<f64>) -> Vec<f64> {
        (0..actions.ncols())
            .map(|j| {
                let m: Vec<f64> = eval.mean.column(j).iter().cloned().collect();
                let a: Vec<f64> = actions.column(j).iter().cloned().collect();
                log_density(&m, &self.log_std, &a)
            })
            .collect()
    }

    /// Σ_j w_j ∇ log π(a_j|s_j) as a flat parameter vector.
    pub fn weighted_log_prob_gradient(&self, eval: &PolicyEval, actions: &DMatrix<f64>, weights: &[f64]) -> Vec<f64> {
        let var: Vec<f64> = self.log_std.iter().map(|s| (2.0 * s).exp()).collect();
        let mut g_out = DMatrix::zeros(self.act_dim(), actions.ncols());
        let mut g_ls = vec![0.0; self.act_dim()];
        for j in 0..actions.ncols() {
            for k in 0..self.act_dim() {
                let m = eval.mean[(k, j)];
                let diff = actions[(k, j)] - m;
                g_out[(k, j)] = weights[j] * diff / var[k] * (1.0 - m * m);
                g_ls[k] += weights[j] * (diff * diff / var[k] - 1.0);
            }
        }
        let mut g = self.net.backward(&eval.cache, &g_out);
        g.extend(g_ls);
        g
    }

    /// Mean KL(old ‖ self) over the batch, given the old means and log-stds.
    pub fn kl_from(&self, old_mean: &DMatrix<f64>, old_log_std: &DVector<f64>, eval: &PolicyEval) -> f64 {
        let n = old_mean.ncols();
        let mut total = 0.0;
        for j in 0..n {
            for k in 0..self.act_dim() {
                let (so, sn) = (old_log_std[k], self.log_std[k]);
                let d = old_mean[(k, j)] - eval.mean[(k, j)];
                total += sn - so + ((2.0 * so).exp() + d * d) / (2.0 * (2.0 * sn).exp()) - 0.5;
            }
        }
        total / n as f64
    }

    /// Fisher-information (KL Hessian at self) times `v`, averaged over the
    /// batch, plus `damping · v`.
    pub fn fisher_vector_product(&self, eval: &PolicyEval, v: &[f64], damping: f64) -> Vec<f64> {
        let n_net = self.net.num_params();
        let n = eval.mean.ncols() as f64;
        let dz = self.net.jvp(&eval.cache, &v[..n_net]);
        let inv_var: Vec<f64> = self.log_std.iter().map(|s| (-2.0 * s).exp()).collect();
        let mut w = dz;
        for j in 0..w.ncols() {
            for k in 0..w.nrows() {
                let m = eval.mean[(k, j)];
                let s = 1.0 - m * m;
                w[(k, j)] *= s * s * inv_var[k] / n;
            }
        }
        let mut out = self.net.backward(&eval.cache, &w);
        out.extend(v[n_net..].iter().map(|x| 2.0 * x));
        out.iter_mut().zip(v).for_each(|(o, x)| *o += damping * x);
        out
    }
}

pub fn log_density(mean: &[f64], log_std: &DVector<f64>, action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std.iter())
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * LN_2PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (GaussianPolicy, DMatrix<f64>, DMatrix<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pol = GaussianPolicy::new(5, 3, &[8, 8], 0.0, &mut rng);
        let p: Vec<f64> = pol.params().iter().map(|x| x * 30.0 + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
        pol.set_params(&p);
        let obs = DMatrix::from_fn(5, 9, |_, _| rng.sample::<f64, _>(StandardNormal));
        let act = DMatrix::from_fn(3, 9, |_, _| rng.sample::<f64, _>(StandardNormal));
        (pol, obs, act, rng)
    }

    #[test]
    fn log_density_of_standard_normal() {
        let lp = log_density(&[0.0], &DVector::from_element(1, 0.0), &[0.0]);
        assert!((lp + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let (pol, obs, act, mut rng) = setup();
        let w: Vec<f64> = (0..9).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let eval = pol.evaluate(&obs);
        let g = pol.weighted_log_prob_gradient(&eval, &act, &w);
        let p0 = pol.params();
        let f = |p: &[f64]| {
            let mut q = pol.clone();
            q.set_params(p);
            q.log_probs(&q.evaluate(&obs), &act).iter().zip(&w).map(|(l, w)| l * w).sum::<f64>()
        };
        let h = 1e-6;
        for k in (0..p0.len()).step_by(5).chain(p0.len() - 3..p0.len()) {
            let mut a = p0.clone();
            a[k] += h;
            let mut b = p0.clone();
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn fisher_is_kl_curvature() {
        let (pol, obs, _, mut rng) = setup();
        let eval = pol.evaluate(&obs);
        let v: Vec<f64> = (0..pol.num_params()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fv = pol.fisher_vector_product(&eval, &v, 0.0);
        let vfv: f64 = fv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let eps = 1e-4;
        let mut moved = pol.clone();
        let p: Vec<f64> = pol.params().iter().zip(&v).map(|(p, v)| p + eps * v).collect();
        moved.set_params(&p);
        let kl = moved.kl_from(&eval.mean, pol.log_std(), &moved.evaluate(&obs));
        assert!((2.0 * kl / (eps * eps) - vfv).abs() < 1e-3 * vfv, "{} vs {vfv}", 2.0 * kl / (eps * eps));
    }

    #[test]
    fn kl_of_self_is_zero() {
        let (pol, obs, _, _) = setup();
        let eval = pol.evaluate(&obs);
        assert_eq!(pol.kl_from(&eval.mean, pol.log_std(), &eval), 0.0);
    }

    #[test]
    fn deterministic_action_is_mean() {
        let (pol, obs, _, mut rng) = setup();
        let o: Vec<f64> = obs.column(0).iter().cloned().collect();
        let (a, _) = pol.act(&o, true, &mut rng);
        assert_eq!(a, pol.mean(&o));
        let (b, _) = pol.act(&o, false, &mut rng);
        assert_ne!(a, b);
    }
}
