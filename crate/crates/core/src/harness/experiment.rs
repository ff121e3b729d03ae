use std::sync::Arc;

use crate::engine::ReplayPlan;
use crate::error::{LabError, Result};
use crate::models::{
    BatchLossModel, LeastSquaresModel, LinearizedSequence, MlpModel, QuadraticSequence, SgdSequence,
    TwoPointSequence,
};
use crate::operator::OperatorSequence;
use crate::order_average::OrderAverageSequence;
use crate::param::ParamVector;

use super::config::{rows_to_matrix, ModelSpec, ResolvedConfig, RunMode};

/// Models built once per run and shared by every seed.
pub(crate) enum Built {
    Quadratic,
    Linearized(Arc<LinearizedSequence>),
    TwoPoint,
    Batch {
        model: Arc<dyn BatchLossModel>,
        mlp: Option<Arc<MlpModel>>,
    },
}

impl Built {
    pub(crate) fn new(cfg: &ResolvedConfig) -> Result<Self> {
        Ok(match &cfg.model {
            ModelSpec::Quadratic { .. } => Built::Quadratic,
            ModelSpec::Linearized { minimum, hessian, noise } => Built::Linearized(Arc::new(LinearizedSequence::new(
                minimum.clone(),
                rows_to_matrix(hessian),
                cfg.learning_rate,
                *noise,
                0,
            )?)),
            ModelSpec::TwoPoint { .. } => Built::TwoPoint,
            ModelSpec::LeastSquares { params, batch_size, .. } => {
                let m = LeastSquaresModel::synthetic(
                    params.rows,
                    params.dim,
                    params.rows / batch_size,
                    params.interpolating,
                    params.scale,
                    params.data_seed,
                )?;
                Built::Batch {
                    model: Arc::new(m),
                    mlp: None,
                }
            }
            ModelSpec::Regression {
                dataset,
                widths,
                activation,
                batch_size,
                ..
            } => {
                let ds = crate::models::synthetic_regression_dataset(*dataset);
                let m = Arc::new(MlpModel::new(widths, *activation, ds, *batch_size)?);
                Built::Batch {
                    model: m.clone(),
                    mlp: Some(m),
                }
            }
        })
    }

    pub(crate) fn start(&self, cfg: &ResolvedConfig, seed: u64) -> ParamVector {
        match self {
            Built::Batch { mlp: Some(m), .. } => m.init_params(seed),
            _ => cfg.start.clone().expect("non-regression configs resolve a start point"),
        }
    }

    /// Full-train and test loss, where the experiment defines them.
    pub(crate) fn losses(&self, theta: &ParamVector) -> (Option<f64>, Option<f64>) {
        match self {
            Built::Quadratic => (Some(QuadraticSequence::loss(theta)), None),
            Built::Linearized(seq) => (Some(seq.loss(theta)), None),
            Built::TwoPoint => (None, None),
            Built::Batch { model, .. } => (Some(model.full_loss(theta)), model.test_loss(theta)),
        }
    }

    pub(crate) fn sequence(&self, cfg: &ResolvedConfig, seed: u64, mode: RunMode) -> Result<Box<dyn OperatorSequence>> {
        let h = cfg.learning_rate;
        Ok(match (&cfg.model, self) {
            (ModelSpec::Quadratic { noise }, _) => Box::new(QuadraticSequence::new(h, *noise, seed)),
            (ModelSpec::Linearized { noise, .. }, Built::Linearized(base)) => Box::new(LinearizedSequence::new(
                base.minimum().clone(),
                base.hessian().clone(),
                h,
                *noise,
                seed,
            )?),
            (ModelSpec::TwoPoint { x0, y0 }, _) => Box::new(TwoPointSequence::new(x0.clone(), y0.clone(), seed)?),
            (ModelSpec::LeastSquares { sampling, .. } | ModelSpec::Regression { sampling, .. }, Built::Batch { model, .. }) => {
                if mode == RunMode::OrderAverage {
                    Box::new(OrderAverageSequence::new(model.clone(), h, cfg.lambda, cfg.c, seed, *sampling)?)
                } else {
                    Box::new(SgdSequence::new(model.clone(), h, seed, *sampling))
                }
            }
            _ => return Err(LabError::Config("model and configuration disagree".into())),
        })
    }
}

/// Replay plan for the engine-driven modes.
pub(crate) fn plan_for(cfg: &ResolvedConfig, mode: RunMode) -> Option<ReplayPlan> {
    match mode {
        RunMode::Forward | RunMode::OrderAverage => Some(ReplayPlan::forward(cfg.steps)),
        RunMode::Backward => Some(ReplayPlan::backward()),
        RunMode::Intermittent => Some(ReplayPlan::intermittent(cfg.resets.clone())),
        RunMode::BackwardAfter => Some(ReplayPlan::switch_at(cfg.switch_step.unwrap_or(0))),
        RunMode::ApproxBackward => None,
    }
}
