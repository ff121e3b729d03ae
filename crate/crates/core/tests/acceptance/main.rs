//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process exits non-zero when a criterion fails that is not listed in
//! `KNOWN_FAILURES`. Known failures still print FAIL.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bwdlab::bracket::{approx_backward_direct, approx_backward_recursive, OrderRow};
use bwdlab::contraction::{exponential_rate_fit, strict_convexity_factor, strict_convexity_threshold};
use bwdlab::distribution::{
    backward_limit_ensemble, compare_ensembles, forward_terminal_ensemble, ks_critical_one_sample,
    ks_critical_two_sample, ks_statistic, normal_cdf, quadratic_stationary_params, CompareThresholds,
    DEFAULT_TOLERANCE,
};
use bwdlab::engine::apply_intermittent_backward;
use bwdlab::harness::{
    order_check_least_squares, order_check_start, run_experiment, run_order_check, stability_report,
    ExperimentConfig, LearningCurve, OrderCheckSpec, OrderTarget,
};
use bwdlab::models::{
    quadratic_backward_closed_form, quadratic_forward_closed_form, BatchLossModel, BatchSampling, LeastSquaresModel,
    NoiseModel, QuadraticSequence, SgdSequence, TwoPointSequence,
};
use bwdlab::operator::CountingSequence;
use bwdlab::rng::{stream, Draws};
use bwdlab::{apply_backward_naive, apply_forward, OperatorSequence, ParamVector, Result};

/// Criteria expected to fail; see the project notes for the analysis.
const KNOWN_FAILURES: &[u32] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn c1_closed_forms() -> Result<Outcome> {
    let (h, n) = (0.1, 500);
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let seq = QuadraticSequence::new(h, NoiseModel::gaussian(1.0), seed);
        let eps = seq.noise_values(n);
        let start = ParamVector::scalar(1.0);
        let fwd = apply_forward(&seq, &start, n)?;
        let bwd = apply_backward_naive(&seq, &start, n)?;
        for m in 1..=n {
            worst = worst
                .max((fwd.iterate(m)[0] - quadratic_forward_closed_form(1.0, h, &eps[..m])).abs())
                .max((bwd.iterate(m)[0] - quadratic_backward_closed_form(1.0, h, &eps[..m])).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |engine − closed form| = {worst:.2e} (≤ 1e-12)"))
}

fn quadratic(seed: u64) -> Result<QuadraticSequence> {
    Ok(QuadraticSequence::new(0.1, NoiseModel::gaussian(1.0), seed))
}

fn c2_point_convergence() -> Result<Outcome> {
    let seeds: Vec<u64> = (0..2000).collect();
    let start = ParamVector::scalar(1.0);
    let b = backward_limit_ensemble(quadratic, &start, &seeds, 400, DEFAULT_TOLERANCE)?;
    let f = forward_terminal_ensemble(quadratic, &start, &seeds, 400)?;
    let b_conv = b.terminal_displacements.iter().filter(|&&d| d < 1e-10).count();
    let f_moving = f.terminal_displacements.iter().filter(|&&d| d > 1e-3).count();
    let pass = b_conv == 2000 && f_moving as f64 >= 0.99 * 2000.0;
    outcome(
        pass,
        format!(
            "backward displacement < 1e-10: {b_conv}/2000 (need 2000); forward > 1e-3: {f_moving}/2000 (need ≥ 1980)"
        ),
    )
}

fn c3_rate() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = String::new();
    for h in [0.05, 0.1, 0.2] {
        let target = (1.0f64 - h).ln();
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let seq = QuadraticSequence::new(h, NoiseModel::gaussian(1.0), seed);
            let traj = apply_backward_naive(&seq, &ParamVector::scalar(1.0), 400)?;
            let fit = exponential_rate_fit(&traj, traj.terminal())?;
            worst = worst.max((fit.slope - target).abs() / target.abs());
        }
        pass &= worst <= 0.05;
        let _ = write!(detail, "h={h}: worst rel. slope error {:.2}%; ", 100.0 * worst);
    }
    outcome(pass, format!("{}(≤ 5%, 10 seeds each)", detail))
}

fn c4_two_point() -> Result<Outcome> {
    let (x0, y0) = (ParamVector::scalar(0.0), ParamVector::scalar(1.0));
    let make = |s| TwoPointSequence::new(x0.clone(), y0.clone(), s);
    let seeds: Vec<u64> = (0..2000).collect();
    let start = ParamVector::scalar(0.5);
    let b = backward_limit_ensemble(make, &start, &seeds, 1000, DEFAULT_TOLERANCE)?;
    let mut exact = 0;
    let mut flipping = 0;
    for (i, &seed) in seeds.iter().enumerate() {
        let seq = make(seed)?;
        exact += (&b.points[i] == seq.target(1)) as usize;
        let f = apply_forward(&seq, &start, 1000)?;
        flipping += (2..=1000).any(|m| f.iterate(m) != f.iterate(m - 1)) as usize;
    }
    let freq = b.frequency_near(&x0, 0.0);
    let pass = exact == 2000 && flipping == 2000 && (0.45..=0.55).contains(&freq);
    outcome(
        pass,
        format!(
            "backward limit = target of T₁: {exact}/2000; forward seeds with a flip: {flipping}/2000; x₀ frequency {freq:.4} (in [0.45, 0.55])"
        ),
    )
}

fn c5_distribution() -> Result<Outcome> {
    let start = ParamVector::scalar(1.0);
    let first: Vec<u64> = (0..2000).collect();
    let second: Vec<u64> = (2000..4000).collect();
    let b = backward_limit_ensemble(quadratic, &start, &first, 400, DEFAULT_TOLERANCE)?;
    let (mean, var) = quadratic_stationary_params(0.1, 1.0)?;
    let one = ks_statistic(&b.coordinate(0), normal_cdf(mean, var)?)?;
    let one_crit = ks_critical_one_sample(2000, 0.01);
    let f = forward_terminal_ensemble(quadratic, &start, &second, 400)?;
    let two_crit = ks_critical_two_sample(2000, 2000, 0.01);
    let two = compare_ensembles(&b, &f, &CompareThresholds::ks_only(two_crit))?.max_ks();
    outcome(
        one < one_crit && two < two_crit,
        format!("one-sample D = {one:.4} (< {one_crit:.4}); two-sample D = {two:.4} (< {two_crit:.4})"),
    )
}

fn c6_strict_convexity() -> Result<Outcome> {
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for data_seed in 0..3 {
        let model = Arc::new(LeastSquaresModel::synthetic(40, 5, 4, false, 0.5, data_seed)?);
        let (m, big_m) = model.convexity_constants(&model.all_examples());
        let threshold = strict_convexity_threshold(m, big_m);
        for h in [0.01, 0.1, threshold - 1e-3] {
            let dynm: Arc<dyn BatchLossModel> = model.clone();
            let seq = SgdSequence::new(dynm, h, 0, BatchSampling::FullBatch);
            let op = seq.operator(1);
            let k = strict_convexity_factor(h, m, big_m)?;
            let mut draws = Draws::new(data_seed, stream::PAIRS, 1);
            for _ in 0..200 {
                let a = ParamVector::from_raw((0..5).map(|_| 3.0 * draws.gaussian()).collect());
                let b = ParamVector::from_raw((0..5).map(|_| 3.0 * draws.gaussian()).collect());
                let slack = k * a.distance(&b) - op.apply(&a).distance(&op.apply(&b));
                worst = worst.min(slack);
                checked += 1;
            }
        }
    }
    outcome(
        worst >= -1e-9,
        format!("min slack {worst:.3e} over {checked} pairs (3 models × 3 rates × 200; ≥ −1e-9)"),
    )
}

fn ratios_in_band(rows: &[OrderRow], levels: usize) -> (bool, String) {
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let ok = rows.len() == levels && ratios.len() == levels - 1 && ratios.iter().all(|r| (6.5..=9.5).contains(r));
    (ok, ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", "))
}

fn c7_approx_order() -> Result<Outcome> {
    let spec = OrderCheckSpec::new(OrderTarget::ApproxBackward);
    let rows = run_order_check(&spec)?;
    let (band, ratios) = ratios_in_band(&rows, spec.levels);
    let model: Arc<dyn BatchLossModel> = Arc::new(order_check_least_squares(spec.data_seed)?);
    let theta0 = order_check_start();
    let mut worst: f64 = 0.0;
    for h in [0.1, 0.05, 0.025, 0.0125] {
        let seq = SgdSequence::new(model.clone(), h, spec.seed, BatchSampling::WithReplacement);
        let (rec, _) = approx_backward_recursive(&seq, &theta0, spec.steps)?;
        let direct = approx_backward_direct(&seq, &theta0, spec.steps)?;
        worst = worst.max(rec.distance(&direct) / direct.norm());
    }
    outcome(
        band && worst <= 1e-10,
        format!("ratios [{ratios}] (in [6.5, 9.5]); recursion vs direct rel. {worst:.2e} (≤ 1e-10)"),
    )
}

fn c8_order_average() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = String::new();
    for c in [2, 3, 4] {
        for target in [OrderTarget::PermutationAverage, OrderTarget::SmallBatch] {
            let spec = OrderCheckSpec {
                target,
                h0: 0.1,
                levels: 4,
                c,
                steps: 0,
                data_seed: 3,
                seed: 1,
            };
            let (ok, ratios) = ratios_in_band(&run_order_check(&spec)?, spec.levels);
            pass &= ok;
            let name = if target == OrderTarget::PermutationAverage { "avg" } else { "i<j" };
            let _ = write!(detail, "c={c} {name} [{ratios}]; ");
        }
    }
    outcome(pass, format!("{detail}(in [6.5, 9.5])"))
}

fn c9_stability() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::from_json(
        r#"{"experiment": "regression", "modes": ["forward", "backward"], "dataset": "square",
            "widths": [64, 64], "activation": "tanh", "batch_size": 1, "learning_rate": 0.05,
            "steps": 1400, "seeds": [0, 1, 2, 3, 4]}"#,
    )?;
    cfg.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&cfg)?;
    let report = stability_report(&LearningCurve::read_dir(dir.path())?, 200)?;
    let mut pass = report.comparisons.len() == 5;
    let mut detail = String::new();
    for c in &report.comparisons {
        let var_ok = c.backward_more_stable;
        let disp_ok = c.displacement_ratio < 0.1;
        pass &= var_ok && disp_ok;
        let _ = write!(
            detail,
            "seed {}: var {:.1e} vs {:.1e} {}, disp ratio {:.2} {}; ",
            c.seed,
            c.backward_variance.unwrap_or(f64::NAN),
            c.forward_variance.unwrap_or(f64::NAN),
            if var_ok { "ok" } else { "NOT smaller" },
            c.displacement_ratio,
            if disp_ok { "ok" } else { "≥ 0.1" },
        );
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn c10_intermittent() -> Result<Outcome> {
    let (h, n, reset) = (0.1, 200, 100);
    let k: f64 = 1.0 - h;
    let mut pass = true;
    let mut jumps_seen = Vec::new();
    for seed in 0..10 {
        let seq = QuadraticSequence::new(h, NoiseModel::gaussian(1.0), seed);
        let traj = apply_intermittent_backward(&seq, &ParamVector::scalar(1.0), n, &[reset])?;
        // Within the window anchored at r, step m moves by at most D_r·k^{m−1−r},
        // where D_r = max over the window of d(θ_r, T_i(θ_r)).
        let envelope = |r: usize, end: usize| -> f64 {
            let anchor = traj.iterate(r);
            (r + 1..=end).map(|i| seq.apply_at(i, anchor).distance(anchor)).fold(0.0, f64::max)
        };
        let windows = [(0usize, reset, envelope(0, reset)), (reset, n, envelope(reset, n))];
        let mut jumps = Vec::new();
        for m in 1..=n {
            let d = traj.records[m].step_displacement;
            let (r, _, bound) = windows[if m > reset { 1 } else { 0 }];
            pass &= d <= bound * k.powi((m - 1 - r) as i32) * (1.0 + 1e-12);
            if m >= 2 {
                // a jump breaks the envelope of the window that held step m − 1
                let (r_prev, _, bound_prev) = windows[if m - 1 > reset { 1 } else { 0 }];
                if d > bound_prev * k.powi((m - 1 - r_prev) as i32) * (1.0 + 1e-12) {
                    jumps.push(m);
                }
            }
        }
        pass &= jumps == vec![reset + 1];
        jumps_seen.push(jumps);
    }
    let all_at_reset = jumps_seen.iter().all(|j| j == &vec![reset + 1]);
    outcome(
        pass,
        format!(
            "10 seeds: geometric envelope k = 0.9 holds in both windows; jumps {} (expected exactly one, at step {})",
            if all_at_reset { format!("only at step {}", reset + 1) } else { format!("{jumps_seen:?}") },
            reset + 1
        ),
    )
}

fn run_dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name != "manifest.json" {
            out.push((name, std::fs::read(e.path())?));
        }
    }
    out.sort();
    Ok(out)
}

fn c11_determinism_and_cost() -> Result<Outcome> {
    let json = r#"{"experiment": "least-squares", "modes": ["forward", "backward", "intermittent", "approx-backward"],
        "steps": 80, "seeds": [1, 2, 3], "resets": [40], "svg": true}"#;
    let mut same = true;
    let mut previous = None;
    for _ in 0..2 {
        let dir = tempfile::tempdir()?;
        let mut cfg = ExperimentConfig::from_json(json)?;
        cfg.output_dir = Some(dir.path().to_path_buf());
        run_experiment(&cfg)?;
        let bytes = run_dir_bytes(dir.path())?;
        if let Some(p) = previous.replace(bytes.clone()) {
            same &= p == bytes;
        }
    }
    let seq = QuadraticSequence::new(0.1, NoiseModel::gaussian(1.0), 5);
    let start = ParamVector::scalar(1.0);
    let a = apply_backward_naive(&seq, &start, 200)?;
    same &= a == apply_backward_naive(&seq, &start, 200)?;

    let mut counts_ok = true;
    for n in [10usize, 100, 400] {
        let counted = CountingSequence::new(seq);
        apply_forward(&counted, &start, n)?;
        counts_ok &= counted.applications() == n as u64;
        counted.reset();
        apply_backward_naive(&counted, &start, n)?;
        counts_ok &= counted.applications() == (n * (n + 1) / 2) as u64;
    }
    outcome(
        same && counts_ok,
        format!(
            "repeat runs bitwise identical: {same}; applications n and n(n+1)/2 for n ∈ {{10, 100, 400}}: {counts_ok}"
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>, Option<Duration>);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "closed-form equivalence", c1_closed_forms, Some(Duration::from_secs(1))),
        (2, "backward point convergence", c2_point_convergence, Some(Duration::from_secs(30))),
        (3, "exponential rate", c3_rate, Some(Duration::from_secs(10))),
        (4, "two-point model", c4_two_point, None),
        (5, "stationary law match", c5_distribution, Some(Duration::from_secs(60))),
        (6, "strict convexity bound", c6_strict_convexity, None),
        (7, "approximate backward order", c7_approx_order, Some(Duration::from_secs(10))),
        (8, "split-batch second-order identities", c8_order_average, Some(Duration::from_secs(10))),
        (9, "network stability", c9_stability, Some(Duration::from_secs(300))),
        (10, "intermittent backward shape", c10_intermittent, None),
        (11, "determinism and cost", c11_determinism_and_cost, None),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    let mut failed = Vec::new();
    for (id, name, run, limit) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let result = run();
        let elapsed = t0.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = limit.is_none_or(|l| elapsed < l);
        let limit_text = limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        let ok = pass && in_time;
        println!(
            "{} {id:>2} {name}: {detail} [{:.2}s{limit_text}{}]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
        if !ok {
            failed.push(id);
            if !KNOWN_FAILURES.contains(&id) {
                unexpected.push(id);
            }
        }
    }
    println!(
        "acceptance: {} failed {:?}, unexpected {:?}",
        failed.len(),
        failed,
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
