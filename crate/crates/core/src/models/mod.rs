//! Concrete operator families and loss models.

mod dataset;
mod least_squares;
mod linearized;
mod mlp;
mod noise;
mod quadratic;
mod sgd;
mod two_point;

pub use dataset::{synthetic_regression_dataset, DatasetKind, RegressionDataset};
pub use least_squares::{least_squares_model, LeastSquaresModel};
pub use linearized::{linearized_operator, LinearizedOperator, LinearizedSequence};
pub(crate) use linearized::check_symmetric;
pub use mlp::{mlp_model, Activation, MlpModel, HESSIAN_DIM_CAP};
pub use noise::{NoiseKind, NoiseModel};
pub use quadratic::{
    quadratic_backward_closed_form, quadratic_forward_closed_form, quadratic_noisy_operator,
    QuadraticOperator, QuadraticSequence,
};
pub use sgd::{sgd_operator, BatchSampling, SgdOperator, SgdSequence};
pub use two_point::{two_point_operator, TwoPointOperator, TwoPointSequence};

use nalgebra::DMatrix;

use crate::param::ParamVector;

/// A loss that decomposes over batches, `L(θ) = (1/N) Σ_i L_i(θ)`.
///
/// Batches are sets of example indices; batch indices are 1-based. The
/// `subset_*` methods evaluate the mean per-example loss over an arbitrary
/// example set, which is what split-batch updates need.
pub trait BatchLossModel: Send + Sync {
    fn dim(&self) -> usize;
    fn example_count(&self) -> usize;
    fn batch_count(&self) -> usize;
    fn batch(&self, i: usize) -> &[usize];

    fn subset_loss(&self, examples: &[usize], theta: &ParamVector) -> f64;
    fn subset_gradient(&self, examples: &[usize], theta: &ParamVector) -> ParamVector;
    fn subset_hessian(&self, examples: &[usize], theta: &ParamVector) -> Option<DMatrix<f64>>;

    /// Whether `subset_hessian` returns `Some`.
    fn has_hessian(&self) -> bool {
        true
    }

    /// `false` when Hessians come from finite differences.
    fn hessian_is_analytic(&self) -> bool {
        true
    }

    fn test_loss(&self, _theta: &ParamVector) -> Option<f64> {
        None
    }

    fn loss(&self, i: usize, theta: &ParamVector) -> f64 {
        self.subset_loss(self.batch(i), theta)
    }

    fn gradient(&self, i: usize, theta: &ParamVector) -> ParamVector {
        self.subset_gradient(self.batch(i), theta)
    }

    fn hessian(&self, i: usize, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.subset_hessian(self.batch(i), theta)
    }

    fn full_loss(&self, theta: &ParamVector) -> f64 {
        let n = self.batch_count();
        (1..=n).map(|i| self.loss(i, theta)).sum::<f64>() / n as f64
    }
}

/// Splits `0..count` into `parts` contiguous groups whose sizes differ by at
/// most one.
pub(crate) fn contiguous_partition(count: usize, parts: usize) -> Vec<Vec<usize>> {
    let base = count / parts;
    let extra = count % parts;
    let mut out = Vec::with_capacity(parts);
    let mut next = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push((next..next + len).collect());
        next += len;
    }
    out
}

/// Central-difference Hessian of a gradient map, symmetrized by averaging
/// with its transpose. Step for coordinate `j` is `rel * max(1, |θ_j|)`.
pub fn finite_difference_hessian<G>(gradient: G, theta: &ParamVector, rel: f64) -> DMatrix<f64>
where
    G: Fn(&ParamVector) -> ParamVector,
{
    let d = theta.dim();
    let mut h = DMatrix::zeros(d, d);
    let mut probe = theta.clone();
    for j in 0..d {
        let step = rel * theta[j].abs().max(1.0);
        let orig = theta[j];
        probe.as_mut_slice()[j] = orig + step;
        let gp = gradient(&probe);
        probe.as_mut_slice()[j] = orig - step;
        let gm = gradient(&probe);
        probe.as_mut_slice()[j] = orig;
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}
