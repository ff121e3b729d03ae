mod common;

use std::sync::Arc;

use bwdlab::models::{
    mlp_model, quadratic_noisy_operator, synthetic_regression_dataset, Activation, BatchLossModel, BatchSampling,
    DatasetKind, LeastSquaresModel, LinearizedSequence, NoiseModel, SgdSequence,
};
use bwdlab::{OperatorSequence, ParamVector, UpdateOperator};
use nalgebra::DMatrix;

const FD_REL_STEP: f64 = 1e-5;

fn fd_gradient(f: impl Fn(&ParamVector) -> f64, theta: &ParamVector) -> ParamVector {
    let mut g = vec![0.0; theta.dim()];
    for (k, gk) in g.iter_mut().enumerate() {
        let step = FD_REL_STEP * theta[k].abs().max(1.0);
        let mut plus = theta.clone();
        plus.as_mut_slice()[k] += step;
        let mut minus = theta.clone();
        minus.as_mut_slice()[k] -= step;
        *gk = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    ParamVector::from_raw(g)
}

fn check_gradients(model: &dyn BatchLossModel, points: &[ParamVector]) {
    for (p, theta) in points.iter().enumerate() {
        let b = p % model.batch_count() + 1;
        let analytic = model.gradient(b, theta);
        let numeric = fd_gradient(|t| model.loss(b, t), theta);
        let rel = analytic.distance(&numeric) / analytic.norm().max(1e-12);
        assert!(rel < 1e-5, "point {p} batch {b}: relative error {rel:e}");
    }
}

#[test]
fn least_squares_gradients_match_finite_differences() {
    let m = LeastSquaresModel::synthetic(30, 6, 5, false, 1.0, 2).unwrap();
    let points: Vec<_> = (0..20).map(|i| common::random_point(6, 2.0, 1, i)).collect();
    check_gradients(&m, &points);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let m = mlp_model(&[8, 8], Activation::Tanh, synthetic_regression_dataset(DatasetKind::Cos10x), 4).unwrap();
    let points: Vec<_> = (0..20)
        .map(|i| m.init_params(i).add_scaled(0.3, &common::random_point(m.dim(), 1.0, 2, i)))
        .collect();
    check_gradients(&m, &points);
}

#[test]
fn linearized_field_is_negative_gradient_plus_noise() {
    let seq = LinearizedSequence::new(
        ParamVector::from_raw(vec![1.0, 0.0, -1.0]),
        DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]),
        0.1,
        NoiseModel::gaussian(1.0),
        5,
    )
    .unwrap();
    for i in 0..20u64 {
        let theta = common::random_point(3, 1.5, 3, i);
        let op = seq.operator_at(i as usize + 1);
        let numeric = fd_gradient(|t| seq.loss(t), &theta);
        let field = op.field(&theta).unwrap();
        let expected = op.noise().sub(&numeric);
        assert!(field.distance(&expected) / field.norm() < 1e-5);
    }
}

#[test]
fn interpolating_minimum_is_common_fixed_point() {
    let m = Arc::new(LeastSquaresModel::synthetic(30, 4, 6, true, 1.0, 9).unwrap());
    let star = LeastSquaresModel::interpolant(9, 4);
    for h in [0.01, 0.1, 0.3] {
        let seq = SgdSequence::new(m.clone(), h, 1, BatchSampling::WithReplacement);
        for i in 1..=50 {
            assert!(seq.apply_at(i, &star).distance(&star) < 1e-13);
        }
    }
}

#[test]
fn noise_is_independent_of_evaluation_order() {
    let noise = NoiseModel::gaussian(1.0);
    let ascending: Vec<f64> = (1..=50).map(|i| quadratic_noisy_operator(0.1, i, &noise, 8).eps).collect();
    let descending: Vec<f64> = (1..=50).rev().map(|i| quadratic_noisy_operator(0.1, i, &noise, 8).eps).collect();
    assert!(ascending.iter().eq(descending.iter().rev()));
    let again = quadratic_noisy_operator(0.1, 17, &noise, 8);
    assert_eq!(again.eps, ascending[16]);
}

#[test]
fn dataset_has_101_train_points() {
    let ds = synthetic_regression_dataset(DatasetKind::Square);
    assert_eq!(ds.len(), 101);
    assert_eq!(ds.inputs[0], -1.0);
    assert_eq!(ds.inputs[100], 1.0);
    assert!((ds.targets[75] - 0.25).abs() < 1e-15);
}
