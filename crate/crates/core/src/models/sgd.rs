//! SGD operators `T_i(θ) = θ − h∇L_{B_i}(θ)` over a [`BatchLossModel`].

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;
use crate::rng::{seeded_rng, stream};

use super::BatchLossModel;

pub struct SgdOperator<'a> {
    model: &'a dyn BatchLossModel,
    examples: &'a [usize],
    index: usize,
    h: f64,
}

impl<'a> SgdOperator<'a> {
    pub fn new(model: &'a dyn BatchLossModel, examples: &'a [usize], index: usize, h: f64) -> Self {
        Self {
            model,
            examples,
            index,
            h,
        }
    }

    pub fn examples(&self) -> &[usize] {
        self.examples
    }

    pub fn gradient(&self, theta: &ParamVector) -> ParamVector {
        self.model.subset_gradient(self.examples, theta)
    }

    pub fn hessian(&self, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.model.subset_hessian(self.examples, theta)
    }
}

impl UpdateOperator for SgdOperator<'_> {
    fn index(&self) -> usize {
        self.index
    }
    fn learning_rate(&self) -> f64 {
        self.h
    }
    fn apply(&self, theta: &ParamVector) -> ParamVector {
        if self.h == 0.0 {
            return theta.clone();
        }
        theta.add_scaled(-self.h, &self.gradient(theta))
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        Some(self.gradient(theta).scale(-1.0))
    }
    fn field_jacobian(&self, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.hessian(theta).map(|h| -h)
    }
}

/// SGD operator on batch `i` of `model`.
pub fn sgd_operator(model: &dyn BatchLossModel, batch: usize, h: f64) -> SgdOperator<'_> {
    SgdOperator::new(model, model.batch(batch), batch, h)
}

/// How the batch for step `i` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BatchSampling {
    /// Uniform over batches, independently per step.
    #[default]
    WithReplacement,
    /// Batch `((i − 1) mod N) + 1`.
    Cyclic,
    /// Every step uses all examples: full-batch gradient descent.
    FullBatch,
}

#[derive(Clone)]
pub struct SgdSequence {
    model: Arc<dyn BatchLossModel>,
    h: f64,
    seed: u64,
    sampling: BatchSampling,
    all: Vec<usize>,
}

impl SgdSequence {
    pub fn new(model: Arc<dyn BatchLossModel>, h: f64, seed: u64, sampling: BatchSampling) -> Self {
        let all = (0..model.example_count()).collect();
        Self {
            model,
            h,
            seed,
            sampling,
            all,
        }
    }

    pub fn model(&self) -> &dyn BatchLossModel {
        self.model.as_ref()
    }

    pub fn learning_rate(&self) -> f64 {
        self.h
    }

    /// The batch index used at step `step`, or `None` under full-batch
    /// sampling.
    pub fn batch_index(&self, step: usize) -> Option<usize> {
        let n = self.model.batch_count() as u64;
        match self.sampling {
            BatchSampling::WithReplacement => {
                let w = seeded_rng(self.seed, stream::BATCH, step as u64);
                Some(((w as u128 * n as u128) >> 64) as usize + 1)
            }
            BatchSampling::Cyclic => Some((step - 1) % n as usize + 1),
            BatchSampling::FullBatch => None,
        }
    }

    pub fn examples_at(&self, step: usize) -> &[usize] {
        match self.batch_index(step) {
            Some(b) => self.model.batch(b),
            None => &self.all,
        }
    }

    pub fn sgd_at(&self, step: usize) -> SgdOperator<'_> {
        SgdOperator::new(self.model.as_ref(), self.examples_at(step), step, self.h)
    }

    /// `∇L_{B_step}(θ)`.
    pub fn gradient_at(&self, step: usize, theta: &ParamVector) -> ParamVector {
        self.model.subset_gradient(self.examples_at(step), theta)
    }

    pub fn hessian_at(&self, step: usize, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.model.subset_hessian(self.examples_at(step), theta)
    }
}

impl OperatorSequence for SgdSequence {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(self.sgd_at(index))
    }
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        self.sgd_at(index).apply(theta)
    }
}
