//! The noisy one-dimensional quadratic `L(θ) = θ²/2` with gradient noise.
//!
//! `T_i(θ) = θ − h(θ − ε_i) = (1 − h)θ + hε_i`.

use nalgebra::DMatrix;

use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;

use super::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticOperator {
    pub index: usize,
    pub h: f64,
    pub eps: f64,
}

impl QuadraticOperator {
    #[inline]
    pub fn map(&self, theta: f64) -> f64 {
        (1.0 - self.h) * theta + self.h * self.eps
    }
}

impl UpdateOperator for QuadraticOperator {
    fn index(&self) -> usize {
        self.index
    }
    fn learning_rate(&self) -> f64 {
        self.h
    }
    fn apply(&self, theta: &ParamVector) -> ParamVector {
        ParamVector::scalar(self.map(theta[0]))
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        Some(ParamVector::scalar(self.eps - theta[0]))
    }
    fn field_jacobian(&self, _theta: &ParamVector) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, -1.0))
    }
}

pub fn quadratic_noisy_operator(h: f64, step: usize, noise: &NoiseModel, seed: u64) -> QuadraticOperator {
    QuadraticOperator {
        index: step,
        h,
        eps: noise.sample_scalar(seed, step),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticSequence {
    pub h: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl QuadraticSequence {
    pub fn new(h: f64, noise: NoiseModel, seed: u64) -> Self {
        Self { h, noise, seed }
    }

    /// `ε_1, …, ε_n`.
    pub fn noise_values(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.noise.sample_scalar(self.seed, i)).collect()
    }

    pub fn loss(theta: &ParamVector) -> f64 {
        0.5 * theta[0] * theta[0]
    }
}

impl OperatorSequence for QuadraticSequence {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn dim(&self) -> usize {
        1
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(quadratic_noisy_operator(self.h, index, &self.noise, self.seed))
    }
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        let op = quadratic_noisy_operator(self.h, index, &self.noise, self.seed);
        ParamVector::scalar(op.map(theta[0]))
    }
}

/// `T_n ⋯ T_1(θ) = (1−h)ⁿθ + Σ_j h(1−h)^{n−j} ε_j`.
pub fn quadratic_forward_closed_form(theta: f64, h: f64, eps: &[f64]) -> f64 {
    let n = eps.len() as i32;
    let q = 1.0 - h;
    let noise: f64 = eps
        .iter()
        .enumerate()
        .map(|(j, e)| h * q.powi(n - (j as i32 + 1)) * e)
        .sum();
    q.powi(n) * theta + noise
}

/// `T_1 ⋯ T_n(θ) = (1−h)ⁿθ + Σ_j h(1−h)^{j−1} ε_j`.
pub fn quadratic_backward_closed_form(theta: f64, h: f64, eps: &[f64]) -> f64 {
    let n = eps.len() as i32;
    let q = 1.0 - h;
    let noise: f64 = eps
        .iter()
        .enumerate()
        .map(|(j, e)| h * q.powi(j as i32) * e)
        .sum();
    q.powi(n) * theta + noise
}
