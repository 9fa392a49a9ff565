//! Fully connected tanh networks over column-major sample batches.
//!
//! Inputs are `in_dim × batch` matrices. Parameters are flattened layer by
//! layer as the column-major weight matrix followed by the bias.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// tanh hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Layer inputs recorded during a forward pass: `acts[0]` is the batch and
/// `acts[l]` the tanh output of hidden layer l.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// Gaussian weights scaled by gain/√fan_in (√2 for hidden layers,
    /// `output_gain` for the last), zero biases.
    pub fn new<R: Rng>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let gain = if l == last { output_gain } else { std::f64::consts::SQRT_2 };
                let scale = gain / (w[0] as f64).sqrt();
                Layer {
                    weight: DMatrix::from_fn(w[1], w[0], |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter length mismatch");
        let mut k = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&flat[k..k + n]);
            k += n;
        }
    }

    fn affine(layer: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weight * x;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, Cache) {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, acts.last().expect("non-empty"));
            if l == last {
                return (z, Cache { acts });
            }
            acts.push(z.map(f64::tanh));
        }
        unreachable!("loop returns at the output layer")
    }

    /// Single-sample forward pass without a cache.
    pub fn forward_one(&self, x: &[f64]) -> DVector<f64> {
        let mut a = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * &a + &layer.bias;
            a = if l == last { z } else { z.map(f64::tanh) };
        }
        a
    }

    /// Gradient of Σ g_out ∘ output with respect to the flat parameters.
    pub fn backward(&self, cache: &Cache, g_out: &DMatrix<f64>) -> Vec<f64> {
        let n = self.layers.len();
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(n);
        let mut delta = g_out.clone();
        for l in (0..n).rev() {
            let a_in = &cache.acts[l];
            let gw = &delta * a_in.transpose();
            let gb = delta.column_sum();
            if l > 0 {
                let back = self.layers[l].weight.transpose() * &delta;
                delta = back.zip_map(a_in, |d, a| d * (1.0 - a * a));
            }
            grads.push((gw, gb));
        }
        let mut out = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads.iter().rev() {
            out.extend_from_slice(gw.as_slice());
            out.extend_from_slice(gb.as_slice());
        }
        out
    }

    /// Directional derivative of the output along flat parameter direction `v`.
    pub fn jvp(&self, cache: &Cache, v: &[f64]) -> DMatrix<f64> {
        let batch = cache.acts[0].ncols();
        let mut k = 0;
        let mut da: Option<DMatrix<f64>> = None;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = layer.weight.shape();
            let dw = DMatrix::from_column_slice(rows, cols, &v[k..k + rows * cols]);
            k += rows * cols;
            let db = DVector::from_column_slice(&v[k..k + rows]);
            k += rows;
            let mut dz = dw * &cache.acts[l];
            for mut col in dz.column_iter_mut() {
                col += &db;
            }
            if let Some(da) = &da {
                dz += &layer.weight * da;
            }
            if l == last {
                debug_assert_eq!(dz.ncols(), batch);
                return dz;
            }
            let a = &cache.acts[l + 1];
            da = Some(dz.zip_map(a, |d, a| d * (1.0 - a * a)));
        }
        unreachable!("loop returns at the output layer")
    }
}
