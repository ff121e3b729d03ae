#![allow(dead_code)]

use std::sync::Arc;

use bwdlab::models::{BatchLossModel, BatchSampling, LeastSquaresModel, SgdSequence};
use bwdlab::rng::{stream, Draws};
use bwdlab::ParamVector;

pub fn least_squares(rows: usize, dim: usize, batches: usize, data_seed: u64) -> Arc<LeastSquaresModel> {
    Arc::new(LeastSquaresModel::synthetic(rows, dim, batches, false, 0.5, data_seed).unwrap())
}

pub fn sgd(model: Arc<LeastSquaresModel>, h: f64, seed: u64, sampling: BatchSampling) -> SgdSequence {
    let m: Arc<dyn BatchLossModel> = model;
    SgdSequence::new(m, h, seed, sampling)
}

/// Gaussian point with the given per-coordinate scale, from a test-only
/// stream of the counter RNG.
pub fn random_point(dim: usize, scale: f64, seed: u64, index: u64) -> ParamVector {
    let mut d = Draws::new(seed, stream::PAIRS + 100, index);
    ParamVector::from_raw((0..dim).map(|_| scale * d.gaussian()).collect())
}
