mod common;

use std::sync::Arc;

use bwdlab::bracket::{
    approx_backward_direct, approx_backward_recursive, forward_backward_difference, halving_ladder, lie_bracket,
    order_check, second_order_expansion,
};
use bwdlab::models::{
    mlp_model, synthetic_regression_dataset, Activation, BatchLossModel, BatchSampling, DatasetKind, SgdSequence,
};
use bwdlab::operator::FieldOperator;
use bwdlab::{apply_backward_naive, OperatorSequence, ParamVector, UpdateOperator};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `V(θ) = (sin θ₁ + aθ₀, θ₀θ₁ + b)` with its Jacobian.
fn nonlinear(a: f64, b: f64) -> FieldOperator {
    FieldOperator::new(
        1,
        0.1,
        Arc::new(move |t: &ParamVector| ParamVector::from_raw(vec![t[1].sin() + a * t[0], t[0] * t[1] + b])),
        Some(Arc::new(move |t: &ParamVector| {
            DMatrix::from_row_slice(2, 2, &[a, t[1].cos(), t[1], t[0]])
        })),
    )
}

/// `V(θ) = (θ₀², cos θ₀ − θ₁)`.
fn other() -> FieldOperator {
    FieldOperator::new(
        2,
        0.1,
        Arc::new(|t: &ParamVector| ParamVector::from_raw(vec![t[0] * t[0], t[0].cos() - t[1]])),
        Some(Arc::new(|t: &ParamVector| {
            DMatrix::from_row_slice(2, 2, &[2.0 * t[0], 0.0, -t[0].sin(), -1.0])
        })),
    )
}

fn combination(a: f64, v1: FieldOperator, b: f64, v2: FieldOperator) -> FieldOperator {
    let (f1, f2) = (v1.clone(), v2.clone());
    FieldOperator::new(
        3,
        0.1,
        Arc::new(move |t: &ParamVector| f1.field(t).unwrap().scale(a).add_scaled(b, &f2.field(t).unwrap())),
        Some(Arc::new(move |t: &ParamVector| {
            v1.field_jacobian(t).unwrap() * a + v2.field_jacobian(t).unwrap() * b
        })),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_is_antisymmetric(x in -3.0f64..3.0, y in -3.0f64..3.0, a in -2.0f64..2.0) {
        let theta = ParamVector::from_raw(vec![x, y]);
        let (v, w) = (nonlinear(a, 0.5), other());
        let vw = lie_bracket(&v, &w, &theta).unwrap();
        let wv = lie_bracket(&w, &v, &theta).unwrap();
        prop_assert!(vw.add_scaled(1.0, &wv).norm() <= 1e-12);
    }

    #[test]
    fn bracket_is_bilinear(x in -3.0f64..3.0, y in -3.0f64..3.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let theta = ParamVector::from_raw(vec![x, y]);
        let (v1, v2, w) = (nonlinear(1.0, 0.0), nonlinear(-0.5, 2.0), other());
        let lhs = lie_bracket(&combination(a, v1.clone(), b, v2.clone()), &w, &theta).unwrap();
        let rhs = lie_bracket(&v1, &w, &theta).unwrap().scale(a)
            .add_scaled(b, &lie_bracket(&v2, &w, &theta).unwrap());
        prop_assert!(lhs.distance(&rhs) <= 1e-10);
    }
}

#[test]
fn recursion_equals_direct_oracle() {
    for inst in 0..20u64 {
        let d = 2 + (inst as usize % 9);
        let n = 5 + (inst as usize * 13) % 96;
        let batches = 4 + inst as usize % 5;
        let model = common::least_squares(6 * batches, d, batches, inst);
        let seq = common::sgd(model, 0.05, inst + 100, BatchSampling::WithReplacement);
        let theta0 = common::random_point(d, 1.0, inst, 0);
        let (rec, _) = approx_backward_recursive(&seq, &theta0, n).unwrap();
        let direct = approx_backward_direct(&seq, &theta0, n).unwrap();
        let rel = rec.distance(&direct) / direct.norm();
        assert!(rel <= 1e-10, "instance {inst} (d {d}, n {n}): {rel:e}");
    }
}

#[test]
fn two_step_correction_is_a_single_bracket() {
    let model = common::least_squares(20, 3, 4, 2);
    let seq = common::sgd(model.clone(), 0.1, 3, BatchSampling::WithReplacement);
    let theta0 = ParamVector::from_raw(vec![0.3, -0.2, 1.0]);
    let (_, state) = approx_backward_recursive(&seq, &theta0, 2).unwrap();
    let (g1, g2) = (seq.gradient_at(1, &theta0), seq.gradient_at(2, &theta0));
    let (h1, h2) = (seq.hessian_at(1, &theta0).unwrap(), seq.hessian_at(2, &theta0).unwrap());
    let bracket = ParamVector::mat_mul(&h1, &g2).sub(&ParamVector::mat_mul(&h2, &g1));
    assert!(state.correction.distance(&bracket) < 1e-12);
}

fn small_network() -> Arc<dyn BatchLossModel> {
    Arc::new(mlp_model(&[4], Activation::Tanh, synthetic_regression_dataset(DatasetKind::Cube), 10).unwrap())
}

#[test]
fn field_brackets_equal_loss_brackets() {
    let model = small_network();
    let seq = SgdSequence::new(model.clone(), 0.1, 4, BatchSampling::WithReplacement);
    let theta = mlp_model(&[4], Activation::Tanh, synthetic_regression_dataset(DatasetKind::Cube), 10)
        .unwrap()
        .init_params(1);
    let n = 4;
    let mut field_level = ParamVector::zeros(theta.dim());
    let mut loss_level = ParamVector::zeros(theta.dim());
    for i in 1..=n {
        for j in (i + 1)..=n {
            field_level.axpy(1.0, &lie_bracket(seq.operator(i).as_ref(), seq.operator(j).as_ref(), &theta).unwrap());
            let (gi, gj) = (seq.gradient_at(i, &theta), seq.gradient_at(j, &theta));
            let (hi, hj) = (seq.hessian_at(i, &theta).unwrap(), seq.hessian_at(j, &theta).unwrap());
            loss_level.axpy(1.0, &ParamVector::mat_mul(&hi, &gj).sub(&ParamVector::mat_mul(&hj, &gi)));
        }
    }
    assert!(field_level.norm() > 1e-6);
    assert!(field_level.distance(&loss_level) <= 1e-10 * field_level.norm());
}

#[test]
fn composition_gap_is_third_order_on_a_network() {
    let model = small_network();
    let theta = mlp_model(&[4], Activation::Tanh, synthetic_regression_dataset(DatasetKind::Cube), 10)
        .unwrap()
        .init_params(2);
    let ladder = halving_ladder(0.1, 4);
    let mut scaled = Vec::new();
    for &h in &ladder {
        let seq = SgdSequence::new(model.clone(), h, 6, BatchSampling::WithReplacement);
        let (diff, pred) = forward_backward_difference(&seq, &theta, 5).unwrap();
        scaled.push(diff.distance(&pred) / h.powi(3));
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, u), &s| (l.min(s), u.max(s)));
    assert!(hi.is_finite() && lo > 0.0);
    assert!(hi / lo < 1.5, "error/h³ not bounded: {scaled:?}");
}

#[test]
fn expansion_matches_two_step_composition_to_third_order() {
    let (v, w) = (nonlinear(0.7, -0.3), other());
    let theta = ParamVector::from_raw(vec![0.4, -0.9]);
    let rows = order_check(
        |h| {
            let scale = |op: &FieldOperator| {
                let o = op.clone();
                FieldOperator::new(
                    op.index(),
                    h,
                    Arc::new(move |t: &ParamVector| o.field(t).unwrap()),
                    Some(Arc::new({
                        let o = op.clone();
                        move |t: &ParamVector| o.field_jacobian(t).unwrap()
                    })),
                )
            };
            let (a, b) = (scale(&v), scale(&w));
            let exact = a.apply(&b.apply(&theta));
            Ok((second_order_expansion(&[&a, &b], &theta)?, exact))
        },
        &halving_ladder(0.1, 5),
    )
    .unwrap();
    let last = rows[rows.len() - 2].ratio.unwrap();
    assert!((last - 8.0).abs() < 0.5, "{rows:?}");
}

#[test]
fn approximation_beats_forward_for_small_rates() {
    let model = common::least_squares(50, 5, 10, 0);
    let seq = common::sgd(model, 0.02, 11, BatchSampling::WithReplacement);
    let theta0 = ParamVector::from_raw(vec![1.0, -0.5, 0.3, 0.8, -1.2]);
    let (approx, _) = approx_backward_recursive(&seq, &theta0, 10).unwrap();
    let exact = apply_backward_naive(&seq, &theta0, 10).unwrap();
    let fwd = bwdlab::apply_forward(&seq, &theta0, 10).unwrap();
    assert!(approx.distance(exact.terminal()) < 0.1 * fwd.terminal().distance(exact.terminal()));
}
