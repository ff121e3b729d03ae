//! Large-batch versus split small-batch updates, the implicit small-batch
//! regularization term, the exact average over split orders and the
//! explicit λ-weighted order-average regularizer.

use std::sync::Arc;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::models::{BatchLossModel, BatchSampling, SgdSequence};
use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;
use crate::rng::{seeded_rng, stream, Draws};

/// Largest split count for which all `c!` orders are enumerated.
pub const MAX_ENUMERATED_SPLITS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub c: usize,
    pub large_rate: f64,
    /// `large_rate / c`.
    pub small_rate: f64,
    pub lambda: f64,
    pub batch: Vec<usize>,
    pub splits: Vec<Vec<usize>>,
}

impl SplitConfig {
    pub fn new(batch: &[usize], c: usize, large_rate: f64, lambda: f64, seed: u64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(LabError::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let splits = split_batch(batch, c, seed)?;
        Ok(Self {
            c,
            large_rate,
            small_rate: large_rate / c as f64,
            lambda,
            batch: batch.to_vec(),
            splits,
        })
    }
}

/// Seeded uniform partition of `batch` into `c` equal parts.
pub fn split_batch(batch: &[usize], c: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if c == 0 {
        return Err(LabError::Config("split count must be >= 1".into()));
    }
    if batch.is_empty() || batch.len() % c != 0 {
        return Err(LabError::Config(format!(
            "batch of size {} cannot be split into {c} equal parts; resize it to a multiple of {c}",
            batch.len()
        )));
    }
    if c == 1 {
        return Ok(vec![batch.to_vec()]);
    }
    let mut items = batch.to_vec();
    Draws::new(seed, stream::SPLIT, 0).shuffle(&mut items);
    Ok(items.chunks(batch.len() / c).map(<[usize]>::to_vec).collect())
}

fn field(model: &dyn BatchLossModel, examples: &[usize], theta: &ParamVector) -> ParamVector {
    model.subset_gradient(examples, theta).scale(-1.0)
}

fn jacobian(model: &dyn BatchLossModel, split: usize, examples: &[usize], theta: &ParamVector) -> Result<DMatrix<f64>> {
    model
        .subset_hessian(examples, theta)
        .map(|h| -h)
        .ok_or(LabError::Capability {
            index: split + 1,
            what: "Hessian",
        })
}

/// `θ + hV_B(θ)` with `V_B = −∇L_B`.
pub fn large_batch_update(model: &dyn BatchLossModel, batch: &[usize], theta: &ParamVector, h: f64) -> ParamVector {
    if h == 0.0 {
        return theta.clone();
    }
    theta.add_scaled(h, &field(model, batch, theta))
}

/// Applies one `h′` step per split, `splits[order[0]]` first.
pub fn sequential_small_batch_update(
    model: &dyn BatchLossModel,
    splits: &[Vec<usize>],
    theta: &ParamVector,
    h_small: f64,
    order: &[usize],
) -> Result<ParamVector> {
    let mut seen = vec![false; splits.len()];
    if order.len() != splits.len() || order.iter().any(|&k| k >= splits.len() || std::mem::replace(&mut seen[k], true)) {
        return Err(LabError::Config(format!(
            "order {order:?} is not a permutation of 0..{}",
            splits.len()
        )));
    }
    let mut x = theta.clone();
    for &k in order {
        x = large_batch_update(model, &splits[k], &x, h_small);
    }
    Ok(x)
}

/// `h′²Σ_{i<j} V_j′(θ)V_i(θ)` for splits applied in index order: each
/// later-applied split's Jacobian acts on every earlier split's field.
/// Sequential application equals [`large_batch_update`] plus this term up to
/// `O(h′³)`.
pub fn small_batch_regularizer(
    model: &dyn BatchLossModel,
    splits: &[Vec<usize>],
    theta: &ParamVector,
    h_small: f64,
) -> Result<ParamVector> {
    let mut prefix = ParamVector::zeros(theta.dim());
    let mut acc = ParamVector::zeros(theta.dim());
    for (j, split) in splits.iter().enumerate() {
        if j > 0 {
            let jj = jacobian(model, j, split, theta)?;
            acc.axpy(1.0, &ParamVector::mat_mul(&jj, &prefix));
        }
        prefix.axpy(1.0, &field(model, split, theta));
    }
    Ok(acc.scale(h_small * h_small))
}

/// `Σ_{i≠j} V_i′(θ)V_j(θ)`.
pub fn order_average_term(model: &dyn BatchLossModel, splits: &[Vec<usize>], theta: &ParamVector) -> Result<ParamVector> {
    let fields: Vec<ParamVector> = splits.iter().map(|s| field(model, s, theta)).collect();
    let mut total = ParamVector::zeros(theta.dim());
    for f in &fields {
        total.axpy(1.0, f);
    }
    let mut acc = ParamVector::zeros(theta.dim());
    for (i, split) in splits.iter().enumerate() {
        let ji = jacobian(model, i, split, theta)?;
        acc.axpy(1.0, &ParamVector::mat_mul(&ji, &total.sub(&fields[i])));
    }
    Ok(acc)
}

/// Mean of [`sequential_small_batch_update`] over all `c!` orders.
pub fn permutation_average_update_exact(
    model: &dyn BatchLossModel,
    splits: &[Vec<usize>],
    theta: &ParamVector,
    h_small: f64,
) -> Result<ParamVector> {
    let c = splits.len();
    if c > MAX_ENUMERATED_SPLITS {
        return Err(LabError::ResourceGuard(format!(
            "{c} splits means {c}! orders; enumeration is capped at {MAX_ENUMERATED_SPLITS}"
        )));
    }
    if c == 0 {
        return Err(LabError::Config("no splits".into()));
    }
    let mut acc = ParamVector::zeros(theta.dim());
    let mut count = 0usize;
    for order in (0..c).permutations(c) {
        acc.axpy(1.0, &sequential_small_batch_update(model, splits, theta, h_small, &order)?);
        count += 1;
    }
    Ok(acc.scale(1.0 / count as f64))
}

/// `T_large(θ) + λΣ_{i≠j}V_i′(θ)V_j(θ)` over a seeded split of `batch`.
pub fn order_average_regularized_update(
    model: &dyn BatchLossModel,
    batch: &[usize],
    theta: &ParamVector,
    h: f64,
    lambda: f64,
    c: usize,
    seed: u64,
) -> Result<ParamVector> {
    let cfg = SplitConfig::new(batch, c, h, lambda, seed)?;
    regularized_with_splits(model, &cfg, theta)
}

fn regularized_with_splits(model: &dyn BatchLossModel, cfg: &SplitConfig, theta: &ParamVector) -> Result<ParamVector> {
    let base = large_batch_update(model, &cfg.batch, theta, cfg.large_rate);
    if cfg.lambda == 0.0 {
        return Ok(base);
    }
    Ok(base.add_scaled(cfg.lambda, &order_average_term(model, &cfg.splits, theta)?))
}

/// Training with the explicit regularizer: step `i` draws a batch as
/// [`SgdSequence`] does, splits it with a per-step seed and applies
/// [`order_average_regularized_update`].
pub struct OrderAverageSequence {
    batches: SgdSequence,
    lambda: f64,
    c: usize,
}

impl OrderAverageSequence {
    pub fn new(
        model: Arc<dyn BatchLossModel>,
        h: f64,
        lambda: f64,
        c: usize,
        seed: u64,
        sampling: BatchSampling,
    ) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(LabError::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if lambda > 0.0 && !model.has_hessian() {
            return Err(LabError::Capability {
                index: 0,
                what: "Hessian",
            });
        }
        let seq = SgdSequence::new(model, h, seed, sampling);
        let sizes = (1..=seq.model().batch_count()).map(|b| seq.model().batch(b).len());
        if let Some(bad) = sizes.clone().find(|s| s % c != 0 || c == 0) {
            return Err(LabError::Config(format!(
                "batch of size {bad} cannot be split into {c} equal parts"
            )));
        }
        Ok(Self {
            batches: seq,
            lambda,
            c,
        })
    }

    pub fn mode_tag(&self) -> String {
        format!("order-average(λ={})", self.lambda)
    }

    pub fn model(&self) -> &dyn BatchLossModel {
        self.batches.model()
    }

    fn config_at(&self, index: usize) -> Result<SplitConfig> {
        let split_seed = seeded_rng(self.batches.seed(), stream::SPLIT, index as u64);
        SplitConfig::new(
            self.batches.examples_at(index),
            self.c,
            self.batches.learning_rate(),
            self.lambda,
            split_seed,
        )
    }
}

struct OrderAverageOperator<'a> {
    seq: &'a OrderAverageSequence,
    index: usize,
}

impl UpdateOperator for OrderAverageOperator<'_> {
    fn index(&self) -> usize {
        self.index
    }

    fn learning_rate(&self) -> f64 {
        self.seq.batches.learning_rate()
    }

    fn apply(&self, theta: &ParamVector) -> ParamVector {
        self.seq
            .config_at(self.index)
            .and_then(|cfg| regularized_with_splits(self.seq.model(), &cfg, theta))
            .expect("split sizes and Hessian availability are checked at construction")
    }
}

impl OperatorSequence for OrderAverageSequence {
    fn seed(&self) -> u64 {
        self.batches.seed()
    }

    fn dim(&self) -> usize {
        self.batches.dim()
    }

    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(OrderAverageOperator { seq: self, index })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LeastSquaresModel;

    fn model() -> LeastSquaresModel {
        LeastSquaresModel::synthetic(12, 3, 1, false, 1.0, 9).unwrap()
    }

    #[test]
    fn splits_partition_the_batch() {
        let b = [3, 5, 7, 9];
        let s = split_batch(&b, 2, 1).unwrap();
        assert_eq!(s.len(), 2);
        let mut all: Vec<usize> = s.concat();
        all.sort();
        assert_eq!(all, b);
        assert_eq!(s, split_batch(&b, 2, 1).unwrap());
        assert_eq!(split_batch(&b, 1, 1).unwrap(), vec![b.to_vec()]);
        assert!(matches!(split_batch(&b, 3, 1), Err(LabError::Config(_))));
    }

    #[test]
    fn large_update_decomposes_over_splits() {
        let m = model();
        let batch: Vec<usize> = (0..12).collect();
        let theta = ParamVector::from_raw(vec![0.3, -0.2, 1.1]);
        let splits = split_batch(&batch, 4, 2).unwrap();
        let h = 0.2;
        let lhs = large_batch_update(&m, &batch, &theta, h).sub(&theta);
        let mut rhs = ParamVector::zeros(3);
        for s in &splits {
            rhs.axpy(h / 4.0, &field(&m, s, &theta));
        }
        assert!(lhs.distance(&rhs) < 1e-12);
        assert_eq!(large_batch_update(&m, &batch, &theta, 0.0), theta);
    }

    #[test]
    fn single_split_cases() {
        let m = model();
        let batch: Vec<usize> = (0..12).collect();
        let theta = ParamVector::from_raw(vec![0.3, -0.2, 1.1]);
        let splits = vec![batch.clone()];
        let seq = sequential_small_batch_update(&m, &splits, &theta, 0.05, &[0]).unwrap();
        assert_eq!(seq, large_batch_update(&m, &batch, &theta, 0.05));
        assert_eq!(small_batch_regularizer(&m, &splits, &theta, 0.05).unwrap().norm(), 0.0);
        assert!(sequential_small_batch_update(&m, &splits, &theta, 0.05, &[1]).is_err());
    }

    #[test]
    fn identical_splits_commute() {
        let m = model();
        let s: Vec<usize> = (0..4).collect();
        let splits = vec![s.clone(), s.clone(), s];
        let theta = ParamVector::from_raw(vec![0.3, -0.2, 1.1]);
        let a = sequential_small_batch_update(&m, &splits, &theta, 0.1, &[0, 1, 2]).unwrap();
        let b = sequential_small_batch_update(&m, &splits, &theta, 0.1, &[2, 0, 1]).unwrap();
        assert_eq!(a, b);
        let avg = permutation_average_update_exact(&m, &splits, &theta, 0.1).unwrap();
        assert!(avg.distance(&a) < 1e-15);
        let reg = small_batch_regularizer(&m, &splits, &theta, 0.1).unwrap();
        let v = field(&m, &splits[0], &theta);
        let j = jacobian(&m, 0, &splits[0], &theta).unwrap();
        let expect = ParamVector::mat_mul(&j, &v).scale(3.0 * 0.01);
        assert!(reg.distance(&expect) < 1e-14);
    }

    #[test]
    fn two_split_average_is_mean_of_orders() {
        let m = model();
        let splits = split_batch(&(0..12).collect::<Vec<_>>(), 2, 3).unwrap();
        let theta = ParamVector::from_raw(vec![0.1, 0.2, 0.3]);
        let a = sequential_small_batch_update(&m, &splits, &theta, 0.1, &[0, 1]).unwrap();
        let b = sequential_small_batch_update(&m, &splits, &theta, 0.1, &[1, 0]).unwrap();
        let avg = permutation_average_update_exact(&m, &splits, &theta, 0.1).unwrap();
        assert!(avg.distance(&a.add_scaled(1.0, &b).scale(0.5)) < 1e-15);
    }

    #[test]
    fn enumeration_guard() {
        let m = LeastSquaresModel::synthetic(18, 2, 1, false, 1.0, 0).unwrap();
        let splits: Vec<Vec<usize>> = (0..9).map(|k| vec![2 * k, 2 * k + 1]).collect();
        assert!(matches!(
            permutation_average_update_exact(&m, &splits, &ParamVector::zeros(2), 0.1),
            Err(LabError::ResourceGuard(_))
        ));
    }

    #[test]
    fn zero_lambda_is_large_batch() {
        let m = model();
        let batch: Vec<usize> = (0..12).collect();
        let theta = ParamVector::from_raw(vec![0.3, -0.2, 1.1]);
        let r = order_average_regularized_update(&m, &batch, &theta, 0.1, 0.0, 3, 4).unwrap();
        assert_eq!(r, large_batch_update(&m, &batch, &theta, 0.1));
    }

    #[test]
    fn sequence_rejects_indivisible_batches() {
        let m: Arc<dyn BatchLossModel> = Arc::new(LeastSquaresModel::synthetic(12, 2, 4, false, 1.0, 0).unwrap());
        assert!(OrderAverageSequence::new(m.clone(), 0.1, 0.01, 2, 0, BatchSampling::Cyclic).is_err());
        let s = OrderAverageSequence::new(m, 0.1, 0.01, 3, 0, BatchSampling::Cyclic).unwrap();
        assert_eq!(s.mode_tag(), "order-average(λ=0.01)");
        let x = s.apply_at(1, &ParamVector::zeros(2));
        assert!(x.is_finite());
    }
}
