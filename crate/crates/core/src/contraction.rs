//! Contraction factors, the displacement condition and exponential rate
//! fits.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{LabError, Result};
use crate::models::check_symmetric;
use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;
use crate::rng::{stream, Draws};

/// Distances at or below this are treated as floating-point noise by
/// [`exponential_rate_fit`].
pub const RATE_FIT_FLOOR: f64 = 1e-12;

fn eigenvalues(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(h)?;
    Ok(SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect())
}

/// `‖I − hH‖_op = max_i |1 − hλ_i|` for symmetric `H`.
pub fn gd_operator_norm_factor(hessian: &DMatrix<f64>, h: f64) -> Result<f64> {
    Ok(eigenvalues(hessian)?
        .into_iter()
        .map(|l| (1.0 - h * l).abs())
        .fold(0.0, f64::max))
}

/// `2/λ_max(H)`; gradient descent on `H` contracts iff `0 < h` is below it.
pub fn critical_learning_rate(hessian: &DMatrix<f64>) -> Result<f64> {
    let eig = eigenvalues(hessian)?;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(min > 0.0) {
        return Err(LabError::Config(format!(
            "Hessian is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(2.0 / max)
}

/// `√(1 − 2hm + h²M²)`, the Lipschitz bound of `θ ↦ θ − h∇L(θ)` for an
/// `m`-strongly convex, `M`-smooth loss.
pub fn strict_convexity_factor(h: f64, m: f64, big_m: f64) -> Result<f64> {
    if !(m > 0.0) || m > big_m {
        return Err(LabError::Config(format!(
            "convexity constants must satisfy 0 < m <= M (m = {m}, M = {big_m})"
        )));
    }
    if !(h >= 0.0) {
        return Err(LabError::Config(format!("learning rate must be >= 0, got {h}")));
    }
    let radicand = 1.0 - 2.0 * h * m + h * h * big_m * big_m;
    if radicand < 0.0 {
        return Err(LabError::Config(format!("1 − 2hm + h²M² = {radicand} < 0")));
    }
    Ok(radicand.sqrt())
}

/// `2m/M²`: [`strict_convexity_factor`] is below 1 exactly for `0 < h` under
/// this value.
pub fn strict_convexity_threshold(m: f64, big_m: f64) -> f64 {
    2.0 * m / (big_m * big_m)
}

fn sample_in_ball(draws: &mut Draws, center: &ParamVector, radius: f64) -> ParamVector {
    let d = center.dim();
    let dir: Vec<f64> = (0..d).map(|_| draws.gaussian()).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * draws.uniform().powf(1.0 / d as f64);
    let mut p = center.clone();
    for (pi, di) in p.as_mut_slice().iter_mut().zip(&dir) {
        *pi += r * di / norm;
    }
    p
}

/// Largest observed `d(T(θ₁), T(θ₂)) / d(θ₁, θ₂)` over `n_pairs` pairs drawn
/// uniformly from the ball. A lower bound on the Lipschitz constant there.
pub fn empirical_contraction_estimate(
    op: &dyn UpdateOperator,
    center: &ParamVector,
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(LabError::Config("n_pairs must be >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(LabError::Config(format!("radius must be > 0, got {radius}")));
    }
    let mut draws = Draws::new(seed, stream::PAIRS, 0);
    let mut best: f64 = 0.0;
    let mut taken = 0;
    while taken < n_pairs {
        let a = sample_in_ball(&mut draws, center, radius);
        let b = sample_in_ball(&mut draws, center, radius);
        let gap = a.distance(&b);
        if gap == 0.0 {
            continue;
        }
        best = best.max(op.apply(&a).distance(&op.apply(&b)) / gap);
        taken += 1;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCheck {
    pub max_displacement: f64,
    /// Step attaining the maximum.
    pub argmax: usize,
    /// `max_displacement < bound`, when a bound was supplied.
    pub holds: Option<bool>,
}

/// `max_{i ≤ steps} d(probe, T_i(probe))`, the displacement condition at
/// `probe`.
pub fn displacement_bound_check<S>(
    seq: &S,
    probe: &ParamVector,
    steps: usize,
    bound: Option<f64>,
) -> Result<DisplacementCheck>
where
    S: OperatorSequence + ?Sized,
{
    if steps == 0 {
        return Err(LabError::Config("steps must be >= 1".into()));
    }
    let mut max = 0.0;
    let mut argmax = 1;
    for i in 1..=steps {
        let d = probe.distance(&seq.apply_at(i, probe));
        if d > max {
            max = d;
            argmax = i;
        }
    }
    Ok(DisplacementCheck {
        max_displacement: max,
        argmax,
        holds: bound.map(|b| max < b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Estimate of `log k`.
    pub slope: f64,
    /// Estimate of `log C`.
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares line through `(step, ln distance)` for distances above
/// [`RATE_FIT_FLOOR`].
pub fn fit_log_linear(steps: &[f64], distances: &[f64]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > RATE_FIT_FLOOR)
        .map(|(&s, &d)| (s, d.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(LabError::InsufficientData(format!(
            "{} usable points for a rate fit (need 5)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (rss / n).sqrt(),
        points: pts.len(),
    })
}

/// Fits `ln d(θ_n, limit) ≈ intercept + slope·n` over the trajectory.
pub fn exponential_rate_fit(traj: &Trajectory, limit: &ParamVector) -> Result<RateFit> {
    let steps: Vec<f64> = traj.records.iter().map(|r| r.step as f64).collect();
    let dist: Vec<f64> = traj.records.iter().map(|r| r.iterate.distance(limit)).collect();
    fit_log_linear(&steps, &dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub analytic_factor: Option<f64>,
    pub empirical_factor: f64,
    pub displacement_bound: f64,
    pub probe: ParamVector,
    pub rate_slope: f64,
    pub rate_constant: f64,
    pub pass: bool,
}

impl ContractionReport {
    /// `pass` requires an empirical factor below one and, when a bound was
    /// checked, a satisfied displacement condition.
    pub fn assemble(
        analytic_factor: Option<f64>,
        empirical_factor: f64,
        displacement: &DisplacementCheck,
        probe: ParamVector,
        fit: &RateFit,
    ) -> Self {
        Self {
            analytic_factor,
            empirical_factor,
            displacement_bound: displacement.max_displacement,
            probe,
            rate_slope: fit.slope,
            rate_constant: fit.intercept.exp(),
            pass: empirical_factor < 1.0 && displacement.holds.unwrap_or(true),
        }
    }
}
