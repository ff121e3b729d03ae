//! Two constant maps `S(θ) = x₀` and `U(θ) = y₀`, chosen by a fair coin at
//! each step. Both are contractions with factor 0; forward iterates keep
//! jumping while backward iterates freeze at the target of `T_1`.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;
use crate::rng::{seeded_rng, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointOperator {
    pub index: usize,
    pub target: ParamVector,
}

impl UpdateOperator for TwoPointOperator {
    fn index(&self) -> usize {
        self.index
    }
    /// Fixed at 1 so that `apply(θ) = θ + 1·(target − θ)`.
    fn learning_rate(&self) -> f64 {
        1.0
    }
    fn apply(&self, _theta: &ParamVector) -> ParamVector {
        self.target.clone()
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        Some(self.target.sub(theta))
    }
    fn field_jacobian(&self, theta: &ParamVector) -> Option<DMatrix<f64>> {
        let d = theta.dim();
        Some(-DMatrix::identity(d, d))
    }
}

/// `choice = false` selects `S` (target `x₀`), `true` selects `U` (`y₀`).
pub fn two_point_operator(choice: bool, x0: &ParamVector, y0: &ParamVector) -> TwoPointOperator {
    TwoPointOperator {
        index: 1,
        target: if choice { y0.clone() } else { x0.clone() },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointSequence {
    x0: ParamVector,
    y0: ParamVector,
    seed: u64,
}

impl TwoPointSequence {
    pub fn new(x0: ParamVector, y0: ParamVector, seed: u64) -> Result<Self> {
        if x0.dim() != y0.dim() {
            return Err(LabError::Config("x0 and y0 must share a dimension".into()));
        }
        if x0 == y0 {
            return Err(LabError::Config("x0 and y0 must differ".into()));
        }
        Ok(Self { x0, y0, seed })
    }

    pub fn x0(&self) -> &ParamVector {
        &self.x0
    }

    pub fn y0(&self) -> &ParamVector {
        &self.y0
    }

    /// `true` when `T_index = U`.
    pub fn choice(&self, index: usize) -> bool {
        seeded_rng(self.seed, stream::COIN, index as u64) >> 63 == 1
    }

    pub fn target(&self, index: usize) -> &ParamVector {
        if self.choice(index) {
            &self.y0
        } else {
            &self.x0
        }
    }
}

impl OperatorSequence for TwoPointSequence {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn dim(&self) -> usize {
        self.x0.dim()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(TwoPointOperator {
            index,
            target: self.target(index).clone(),
        })
    }
    fn apply_at(&self, index: usize, _theta: &ParamVector) -> ParamVector {
        self.target(index).clone()
    }
}
