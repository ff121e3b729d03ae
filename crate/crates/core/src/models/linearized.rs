//! Linearized dynamics near a minimum,
//! `T_i(θ) = θ* + (I − hH)(θ − θ*) + hε_i`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;

use super::NoiseModel;

pub(crate) fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if !h.is_square() {
        return Err(LabError::Config(format!(
            "Hessian must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = h.abs().max().max(1.0);
    let asym = (h - h.transpose()).abs().max();
    if asym > 1e-12 * scale {
        return Err(LabError::Config(format!(
            "Hessian is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    index: usize,
    h: f64,
    minimum: Arc<ParamVector>,
    hessian: Arc<DMatrix<f64>>,
    step_matrix: Arc<DMatrix<f64>>,
    eps: ParamVector,
}

impl LinearizedOperator {
    pub fn noise(&self) -> &ParamVector {
        &self.eps
    }
}

impl UpdateOperator for LinearizedOperator {
    fn index(&self) -> usize {
        self.index
    }
    fn learning_rate(&self) -> f64 {
        self.h
    }
    fn apply(&self, theta: &ParamVector) -> ParamVector {
        let offset = theta.sub(&self.minimum);
        let mut out = ParamVector::mat_mul(&self.step_matrix, &offset);
        out.axpy(1.0, &self.minimum);
        out.axpy(self.h, &self.eps);
        out
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        let offset = theta.sub(&self.minimum);
        let mut v = ParamVector::mat_mul(&self.hessian, &offset).scale(-1.0);
        v.axpy(1.0, &self.eps);
        Some(v)
    }
    fn field_jacobian(&self, _theta: &ParamVector) -> Option<DMatrix<f64>> {
        Some(-self.hessian.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct LinearizedSequence {
    minimum: Arc<ParamVector>,
    hessian: Arc<DMatrix<f64>>,
    step_matrix: Arc<DMatrix<f64>>,
    h: f64,
    noise: NoiseModel,
    seed: u64,
}

impl LinearizedSequence {
    pub fn new(
        minimum: ParamVector,
        hessian: DMatrix<f64>,
        h: f64,
        noise: NoiseModel,
        seed: u64,
    ) -> Result<Self> {
        check_symmetric(&hessian)?;
        if hessian.nrows() != minimum.dim() {
            return Err(LabError::Config(format!(
                "Hessian is {}x{} but the minimum has dimension {}",
                hessian.nrows(),
                hessian.ncols(),
                minimum.dim()
            )));
        }
        let d = minimum.dim();
        let step_matrix = DMatrix::identity(d, d) - &hessian * h;
        Ok(Self {
            minimum: Arc::new(minimum),
            hessian: Arc::new(hessian),
            step_matrix: Arc::new(step_matrix),
            h,
            noise,
            seed,
        })
    }

    pub fn minimum(&self) -> &ParamVector {
        &self.minimum
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn noise_vector(&self, index: usize) -> ParamVector {
        ParamVector::from_raw(self.noise.sample(self.seed, index, self.minimum.dim()))
    }

    /// `½ (θ − θ*)ᵀ H (θ − θ*)`.
    pub fn loss(&self, theta: &ParamVector) -> f64 {
        let off = theta.sub(&self.minimum);
        0.5 * off.dot(&ParamVector::mat_mul(&self.hessian, &off))
    }

    pub fn operator_at(&self, index: usize) -> LinearizedOperator {
        LinearizedOperator {
            index,
            h: self.h,
            minimum: Arc::clone(&self.minimum),
            hessian: Arc::clone(&self.hessian),
            step_matrix: Arc::clone(&self.step_matrix),
            eps: self.noise_vector(index),
        }
    }
}

impl OperatorSequence for LinearizedSequence {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn dim(&self) -> usize {
        self.minimum.dim()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(self.operator_at(index))
    }
}

/// Builds the linearized operator for one step. Fails on a non-symmetric
/// Hessian.
pub fn linearized_operator(
    minimum: &ParamVector,
    hessian: &DMatrix<f64>,
    h: f64,
    step: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<LinearizedOperator> {
    let seq = LinearizedSequence::new(minimum.clone(), hessian.clone(), h, *noise, seed)?;
    Ok(seq.operator_at(step))
}
