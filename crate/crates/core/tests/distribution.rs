use bwdlab::distribution::{
    backward_limit_ensemble, compare_ensembles, forward_terminal_ensemble, ks_critical_one_sample,
    ks_critical_two_sample, ks_statistic, normal_cdf, quadratic_stationary_params, CompareThresholds, EnsembleKind,
    DEFAULT_TOLERANCE,
};
use bwdlab::harness::read_ensemble;
use bwdlab::models::{LinearizedSequence, NoiseModel, QuadraticSequence, TwoPointSequence};
use bwdlab::{LabError, ParamVector};
use nalgebra::DMatrix;

const ALPHA: f64 = 0.01;

fn quadratic(seed: u64) -> bwdlab::Result<QuadraticSequence> {
    Ok(QuadraticSequence::new(0.1, NoiseModel::gaussian(1.0), seed))
}

fn linearized(seed: u64) -> bwdlab::Result<LinearizedSequence> {
    LinearizedSequence::new(
        ParamVector::from_raw(vec![1.0, -1.0]),
        DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]),
        0.2,
        NoiseModel::gaussian(0.7),
        seed,
    )
}

#[test]
fn fixed_n_forward_and_backward_laws_agree() {
    let n = 30;
    let (first, second): (Vec<u64>, Vec<u64>) = ((0..2000).collect(), (2000..4000).collect());
    let critical = ks_critical_two_sample(2000, 2000, ALPHA);

    let start = ParamVector::scalar(2.0);
    let b = backward_limit_ensemble(quadratic, &start, &first, n, DEFAULT_TOLERANCE).unwrap();
    let f = forward_terminal_ensemble(quadratic, &start, &second, n).unwrap();
    let cmp = compare_ensembles(&b, &f, &CompareThresholds::ks_only(critical)).unwrap();
    assert!(cmp.pass, "quadratic: KS {} >= {critical}", cmp.max_ks());

    let start = ParamVector::from_raw(vec![0.0, 0.0]);
    let b = backward_limit_ensemble(linearized, &start, &first, n, DEFAULT_TOLERANCE).unwrap();
    let f = forward_terminal_ensemble(linearized, &start, &second, n).unwrap();
    let cmp = compare_ensembles(&b, &f, &CompareThresholds::ks_only(critical)).unwrap();
    assert!(cmp.pass, "linearized: KS {} >= {critical}", cmp.max_ks());
}

#[test]
fn fixed_n_backward_law_matches_closed_form() {
    // Both iterates are (1−h)ⁿθ plus a Gaussian with variance Σ h²(1−h)^{2j}σ².
    let (h, n) = (0.1f64, 30);
    let seeds: Vec<u64> = (0..2000).collect();
    let b = backward_limit_ensemble(quadratic, &ParamVector::scalar(2.0), &seeds, n, DEFAULT_TOLERANCE).unwrap();
    let x = b.coordinate(0);
    let mean = (1.0 - h).powi(n as i32) * 2.0;
    let var: f64 = (0..n).map(|j| h * h * (1.0 - h).powi(2 * j as i32)).sum();
    let stat = ks_statistic(&x, normal_cdf(mean, var).unwrap()).unwrap();
    assert!(stat < ks_critical_one_sample(x.len(), ALPHA), "KS {stat}");
}

#[test]
fn backward_limits_follow_the_stationary_law() {
    let seeds: Vec<u64> = (0..2000).collect();
    let b = backward_limit_ensemble(quadratic, &ParamVector::scalar(1.0), &seeds, 400, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(b.converged_count(), 2000);
    let (mean, var) = quadratic_stationary_params(0.1, 1.0).unwrap();
    let stat = ks_statistic(&b.coordinate(0), normal_cdf(mean, var).unwrap()).unwrap();
    assert!(stat < ks_critical_one_sample(2000, ALPHA), "KS {stat}");
}

#[test]
fn two_point_limits_are_the_first_target() {
    let (x0, y0) = (ParamVector::scalar(-1.0), ParamVector::scalar(1.0));
    let seeds: Vec<u64> = (0..500).collect();
    let make = |s| TwoPointSequence::new(x0.clone(), y0.clone(), s);
    let b = backward_limit_ensemble(make, &ParamVector::scalar(0.0), &seeds, 50, DEFAULT_TOLERANCE).unwrap();
    for (i, p) in b.points.iter().enumerate() {
        assert_eq!(p, make(seeds[i]).unwrap().target(1));
    }
    let freq = b.frequency_near(&x0, 0.0);
    assert!(freq > 0.4 && freq < 0.6);
}

#[test]
fn ensemble_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.csv");
    let seeds: Vec<u64> = (10..30).collect();
    let e = forward_terminal_ensemble(linearized, &ParamVector::from_raw(vec![0.5, 0.5]), &seeds, 40).unwrap();
    e.write_csv(&path).unwrap();
    let back = read_ensemble(&path, EnsembleKind::ForwardTerminals, 40, DEFAULT_TOLERANCE).unwrap();
    assert_eq!(back.seeds, e.seeds);
    assert_eq!(back.points, e.points);
    assert_eq!(back.convergence_flags, e.convergence_flags);
    assert_eq!(back.divergences, e.divergences);
}

#[test]
fn divergent_seeds_are_reported_and_excluded() {
    let seeds: Vec<u64> = (0..4).collect();
    let make = |s| Ok(QuadraticSequence::new(2.5, NoiseModel::gaussian(1.0), s));
    let e = forward_terminal_ensemble(make, &ParamVector::scalar(1.0), &seeds, 3000).unwrap();
    assert_eq!(e.diverged_count(), 4);
    assert!(e.coordinate(0).is_empty());
    let ok = forward_terminal_ensemble(quadratic, &ParamVector::scalar(1.0), &seeds, 10).unwrap();
    assert!(matches!(
        compare_ensembles(&e, &ok, &CompareThresholds::ks_only(1.0)),
        Err(LabError::InsufficientData(_))
    ));
}
