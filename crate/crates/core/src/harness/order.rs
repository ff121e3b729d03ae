use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bracket::{approx_backward_recursive, forward_backward_difference, halving_ladder, order_check, OrderRow};
use crate::engine::apply_backward_naive;
use crate::error::{LabError, Result};
use crate::models::{
    mlp_model, synthetic_regression_dataset, Activation, BatchLossModel, BatchSampling, DatasetKind,
    LeastSquaresModel, MlpModel, SgdSequence,
};
use crate::order_average::{
    large_batch_update, order_average_term, permutation_average_update_exact, sequential_small_batch_update,
    small_batch_regularizer, split_batch,
};
use crate::param::ParamVector;

/// Which approximation an order check measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderTarget {
    /// Second-order approximate backward iterate against exact backward
    /// replay on least squares.
    ApproxBackward,
    /// Backward minus forward composition against its bracket prediction on
    /// least squares.
    Commutator,
    /// Exact permutation-averaged split update against the order-average
    /// expansion on a small network.
    PermutationAverage,
    /// One sequential split order against the small-batch regularizer
    /// expansion on a small network.
    SmallBatch,
    /// Forward Euler against the exact flow of `x' = −x` over unit time; a
    /// first-order self-test of the checker.
    Euler,
}

impl OrderTarget {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| LabError::Config(format!("unknown order-check target '{s}'")))
    }
}

/// Ladder and model settings for an order check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCheckSpec {
    pub target: OrderTarget,
    pub h0: f64,
    pub levels: usize,
    /// Split count for the order-average targets.
    pub c: usize,
    /// Composition length for the least-squares targets.
    pub steps: usize,
    /// Seed of the least-squares design or of the network initialization.
    pub data_seed: u64,
    /// Seed of the batch sequence or of the split draw.
    pub seed: u64,
}

impl OrderCheckSpec {
    pub fn new(target: OrderTarget) -> Self {
        Self {
            target,
            h0: 0.1,
            levels: 4,
            c: 2,
            steps: 10,
            data_seed: 0,
            seed: 11,
        }
    }
}

/// Least-squares problem used by the least-squares targets: 50 rows, d = 5,
/// 10 contiguous batches, design scale 0.5.
pub fn order_check_least_squares(data_seed: u64) -> Result<LeastSquaresModel> {
    LeastSquaresModel::synthetic(50, 5, 10, false, 0.5, data_seed)
}

/// Start point for the least-squares targets.
pub fn order_check_start() -> ParamVector {
    ParamVector::from_raw(vec![1.0, -0.5, 0.3, 0.8, -1.2])
}

/// One-hidden-layer tanh network (4 units) on the square dataset used by the
/// order-average targets, with its 12-example batch.
pub fn order_check_network() -> Result<(MlpModel, Vec<usize>)> {
    let mlp = mlp_model(&[4], Activation::Tanh, synthetic_regression_dataset(DatasetKind::Square), 1)?;
    Ok((mlp, (0..12).map(|k| k * 8).collect()))
}

pub fn run_order_check(spec: &OrderCheckSpec) -> Result<Vec<OrderRow>> {
    let ladder = halving_ladder(spec.h0, spec.levels);
    match spec.target {
        OrderTarget::ApproxBackward | OrderTarget::Commutator => {
            let model: Arc<dyn BatchLossModel> = Arc::new(order_check_least_squares(spec.data_seed)?);
            let theta0 = order_check_start();
            let n = spec.steps;
            let commutator = spec.target == OrderTarget::Commutator;
            order_check(
                |h| {
                    let seq = SgdSequence::new(model.clone(), h, spec.seed, BatchSampling::WithReplacement);
                    if commutator {
                        let (diff, pred) = forward_backward_difference(&seq, &theta0, n)?;
                        Ok((pred, diff))
                    } else {
                        let (approx, _) = approx_backward_recursive(&seq, &theta0, n)?;
                        Ok((approx, apply_backward_naive(&seq, &theta0, n)?.terminal().clone()))
                    }
                },
                &ladder,
            )
        }
        OrderTarget::PermutationAverage | OrderTarget::SmallBatch => {
            let (mlp, batch) = order_check_network()?;
            let theta = mlp.init_params(spec.data_seed);
            let splits = split_batch(&batch, spec.c, spec.seed)?;
            let c = spec.c as f64;
            let order: Vec<usize> = (0..spec.c).collect();
            let permutation = spec.target == OrderTarget::PermutationAverage;
            order_check(
                |hp| {
                    let large = large_batch_update(&mlp, &batch, &theta, hp * c);
                    if permutation {
                        let exact = permutation_average_update_exact(&mlp, &splits, &theta, hp)?;
                        Ok((large.add_scaled(0.5 * hp * hp, &order_average_term(&mlp, &splits, &theta)?), exact))
                    } else {
                        let exact = sequential_small_batch_update(&mlp, &splits, &theta, hp, &order)?;
                        Ok((large.add_scaled(1.0, &small_batch_regularizer(&mlp, &splits, &theta, hp)?), exact))
                    }
                },
                &ladder,
            )
        }
        OrderTarget::Euler => order_check(
            |h| {
                let n = (1.0 / h).round() as usize;
                if n == 0 || ((n as f64) * h - 1.0).abs() > 1e-9 {
                    return Err(LabError::Config(format!("euler target needs 1/h integral, got h = {h}")));
                }
                let x = (0..n).fold(1.0, |x, _| x - h * x);
                Ok((ParamVector::scalar(x), ParamVector::scalar((-1.0f64).exp())))
            },
            &ladder,
        ),
    }
}
