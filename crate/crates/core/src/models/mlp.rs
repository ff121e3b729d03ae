//! A scalar-in, scalar-out multilayer perceptron trained with squared error.
//!
//! Gradients come from a hand-written reverse pass. Hessians are central
//! differences of that gradient and are only offered up to
//! [`HESSIAN_DIM_CAP`] parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::param::ParamVector;
use crate::rng::{stream, Draws};

use super::{contiguous_partition, finite_difference_hessian, BatchLossModel, RegressionDataset};

/// Dense Hessians are refused above this many parameters.
pub const HESSIAN_DIM_CAP: usize = 2000;

const FD_HESSIAN_REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value `a = σ(z)`.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    hidden: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    dim: usize,
    dataset: RegressionDataset,
    batches: Vec<Vec<usize>>,
}

/// Builds an MLP over `dataset` with the given hidden widths. Examples are
/// grouped into contiguous batches of (about) `batch_size`. An empty
/// `hidden` list gives a single affine layer.
pub fn mlp_model(
    hidden: &[usize],
    activation: Activation,
    dataset: RegressionDataset,
    batch_size: usize,
) -> Result<MlpModel> {
    MlpModel::new(hidden, activation, dataset, batch_size)
}

impl MlpModel {
    pub fn new(
        hidden: &[usize],
        activation: Activation,
        dataset: RegressionDataset,
        batch_size: usize,
    ) -> Result<Self> {
        if hidden.iter().any(|&w| w == 0) {
            return Err(LabError::Config("layer widths must be positive".into()));
        }
        if batch_size == 0 || batch_size > dataset.len() {
            return Err(LabError::Config(format!(
                "batch size {batch_size} must be in [1, {}]",
                dataset.len()
            )));
        }
        let mut widths = vec![1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            layers.push(Layer {
                inputs,
                outputs,
                weights: offset,
                bias: offset + inputs * outputs,
            });
            offset += inputs * outputs + outputs;
        }
        let batch_count = dataset.len().div_ceil(batch_size);
        let batches = contiguous_partition(dataset.len(), batch_count);
        Ok(Self {
            hidden: hidden.to_vec(),
            activation,
            layers,
            dim: offset,
            dataset,
            batches,
        })
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn dataset(&self) -> &RegressionDataset {
        &self.dataset
    }

    /// Uniform fan-in initialization, `U(−1/√fan_in, 1/√fan_in)` for weights
    /// and biases alike.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut draws = Draws::new(seed, stream::INIT, 0);
        let mut p = vec![0.0; self.dim];
        for layer in &self.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            let end = layer.bias + layer.outputs;
            for v in &mut p[layer.weights..end] {
                *v = draws.uniform_in(-bound, bound);
            }
        }
        ParamVector::from_raw(p)
    }

    /// Network output at `x`; `acts[l]` receives the activations of layer
    /// `l` (index 0 is the input).
    fn forward(&self, params: &[f64], x: f64, acts: &mut [Vec<f64>]) -> f64 {
        acts[0].clear();
        acts[0].push(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            let w = &params[layer.weights..layer.bias];
            let b = &params[layer.bias..layer.bias + layer.outputs];
            for o in 0..layer.outputs {
                let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                let z = b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                out.push(if l == last { z } else { self.activation.apply(z) });
            }
        }
        acts[last + 1][0]
    }

    fn scratch(&self) -> Vec<Vec<f64>> {
        let mut v = vec![Vec::with_capacity(1)];
        v.extend(self.layers.iter().map(|l| Vec::with_capacity(l.outputs)));
        v
    }

    pub fn predict(&self, params: &ParamVector, x: f64) -> f64 {
        let mut acts = self.scratch();
        self.forward(params.as_slice(), x, &mut acts)
    }

    fn mean_squared_error(&self, params: &ParamVector, xs: &[f64], ys: &[f64]) -> f64 {
        let mut acts = self.scratch();
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| (self.forward(params.as_slice(), x, &mut acts) - y).powi(2))
            .sum();
        total / xs.len() as f64
    }
}

impl BatchLossModel for MlpModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn example_count(&self) -> usize {
        self.dataset.len()
    }

    fn batch_count(&self) -> usize {
        self.batches.len()
    }

    fn batch(&self, i: usize) -> &[usize] {
        &self.batches[i - 1]
    }

    fn subset_loss(&self, examples: &[usize], theta: &ParamVector) -> f64 {
        let mut acts = self.scratch();
        let total: f64 = examples
            .iter()
            .map(|&e| {
                let y = self.dataset.targets[e];
                (self.forward(theta.as_slice(), self.dataset.inputs[e], &mut acts) - y).powi(2)
            })
            .sum();
        total / examples.len() as f64
    }

    fn subset_gradient(&self, examples: &[usize], theta: &ParamVector) -> ParamVector {
        let params = theta.as_slice();
        let mut grad = vec![0.0; self.dim];
        let mut acts = self.scratch();
        let mut delta: Vec<f64> = Vec::new();
        let mut next: Vec<f64> = Vec::new();
        let scale = 2.0 / examples.len() as f64;
        for &e in examples {
            let y_hat = self.forward(params, self.dataset.inputs[e], &mut acts);
            delta.clear();
            delta.push(scale * (y_hat - self.dataset.targets[e]));
            for (l, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[l];
                let gw = layer.weights;
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut grad[gw + o * layer.inputs..gw + (o + 1) * layer.inputs];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[layer.bias + o] += d;
                }
                if l == 0 {
                    break;
                }
                next.clear();
                next.resize(layer.inputs, 0.0);
                let w = &params[layer.weights..layer.bias];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, &wv) in next.iter_mut().zip(row) {
                        *n += wv * d;
                    }
                }
                for (n, &a) in next.iter_mut().zip(input) {
                    *n *= self.activation.slope_from_output(a);
                }
                std::mem::swap(&mut delta, &mut next);
            }
        }
        ParamVector::from_raw(grad)
    }

    fn subset_hessian(&self, examples: &[usize], theta: &ParamVector) -> Option<DMatrix<f64>> {
        if self.dim > HESSIAN_DIM_CAP {
            return None;
        }
        Some(finite_difference_hessian(
            |t| self.subset_gradient(examples, t),
            theta,
            FD_HESSIAN_REL_STEP,
        ))
    }

    fn has_hessian(&self) -> bool {
        self.dim <= HESSIAN_DIM_CAP
    }

    fn hessian_is_analytic(&self) -> bool {
        false
    }

    fn test_loss(&self, theta: &ParamVector) -> Option<f64> {
        Some(self.mean_squared_error(theta, &self.dataset.test_inputs, &self.dataset.test_targets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{synthetic_regression_dataset, DatasetKind};

    #[test]
    fn parameter_count() {
        let ds = synthetic_regression_dataset(DatasetKind::Square);
        let m = MlpModel::new(&[64, 64], Activation::Tanh, ds.clone(), 1).unwrap();
        assert_eq!(m.dim(), (64 + 64) + (64 * 64 + 64) + (64 + 1));
        assert_eq!(m.batch_count(), 101);
        let m3 = MlpModel::new(&[300, 300, 300], Activation::Tanh, ds, 1).unwrap();
        assert_eq!(m3.dim(), 600 + 2 * (300 * 300 + 300) + 301);
        assert!(m3.hessian(1, &m3.init_params(0)).is_none());
    }

    #[test]
    fn zero_network_loss_is_mean_square_target() {
        let ds = synthetic_regression_dataset(DatasetKind::Square);
        let m = MlpModel::new(&[8, 8], Activation::Tanh, ds.clone(), 1).unwrap();
        let zero = ParamVector::zeros(m.dim());
        let examples: Vec<usize> = (10..20).collect();
        let expected = examples.iter().map(|&e| ds.targets[e].powi(2)).sum::<f64>() / 10.0;
        assert!((m.subset_loss(&examples, &zero) - expected).abs() < 1e-15);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let ds = synthetic_regression_dataset(DatasetKind::Cube);
        let m = MlpModel::new(&[16], Activation::Tanh, ds, 1).unwrap();
        let a = m.init_params(3);
        assert_eq!(a, m.init_params(3));
        assert_ne!(a, m.init_params(4));
        // output layer has fan-in 16
        assert!(a.as_slice()[32..].iter().all(|v| v.abs() <= 0.25));
        assert!(a.as_slice()[..32].iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn uneven_batches_cover_dataset() {
        let ds = synthetic_regression_dataset(DatasetKind::Square);
        let m = MlpModel::new(&[4], Activation::Tanh, ds, 8).unwrap();
        assert_eq!(m.batch_count(), 13);
        let total: usize = (1..=13).map(|i| m.batch(i).len()).sum();
        assert_eq!(total, 101);
    }
}
