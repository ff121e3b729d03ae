//! Backward limit and forward terminal ensembles across seeds, the analytic
//! stationary law of the quadratic model, and Kolmogorov–Smirnov comparisons.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::engine::{drive, ReplayPlan};
use crate::error::{LabError, Result};
use crate::operator::OperatorSequence;
use crate::param::ParamVector;

/// Default convergence tolerance on the terminal step displacement.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    BackwardLimits,
    ForwardTerminals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEnsemble {
    pub kind: EnsembleKind,
    pub seeds: Vec<u64>,
    /// Terminal iterate per seed. Diverged seeds hold NaN coordinates.
    pub points: Vec<ParamVector>,
    /// Terminal step displacement below `tolerance`.
    pub convergence_flags: Vec<bool>,
    pub terminal_displacements: Vec<f64>,
    /// Step at which a seed diverged, if it did.
    pub divergences: Vec<Option<usize>>,
    pub steps_used: usize,
    pub tolerance: f64,
}

impl LimitEnsemble {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn diverged_count(&self) -> usize {
        self.divergences.iter().filter(|d| d.is_some()).count()
    }

    pub fn converged_count(&self) -> usize {
        self.convergence_flags.iter().filter(|&&c| c).count()
    }

    /// Points of seeds that completed without diverging.
    pub fn finite_points(&self) -> impl Iterator<Item = &ParamVector> {
        self.points
            .iter()
            .zip(&self.divergences)
            .filter(|(_, d)| d.is_none())
            .map(|(p, _)| p)
    }

    /// Coordinate `k` of every non-divergent point.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.finite_points().map(|p| p[k]).collect()
    }

    /// Fraction of non-divergent points within `tol` of `target`.
    pub fn frequency_near(&self, target: &ParamVector, tol: f64) -> f64 {
        let (hits, total) = self
            .finite_points()
            .fold((0usize, 0usize), |(h, t), p| (h + (p.distance(target) <= tol) as usize, t + 1));
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }

    /// Writes `seed,converged,diverged_step,x0,x1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.points.first().map_or(0, |p| p.dim());
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["seed".to_string(), "converged".into(), "diverged_step".into()];
        header.extend((0..dim).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.seeds[i].to_string(),
                self.convergence_flags[i].to_string(),
                self.divergences[i].map_or(String::new(), |s| s.to_string()),
            ];
            row.extend(self.points[i].as_slice().iter().map(|x| format!("{x:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn terminal_run<S>(seq: &S, start: &ParamVector, n: usize, plan: &ReplayPlan) -> Result<(ParamVector, f64)>
where
    S: OperatorSequence + ?Sized,
{
    let mut disp = 0.0;
    let end = drive(seq, start, n, plan, n.max(1), &mut |view| {
        disp = view.displacement;
        Ok(())
    })?;
    Ok((end, disp))
}

fn collect<S, F>(
    kind: EnsembleKind,
    factory: F,
    start: &ParamVector,
    seeds: &[u64],
    n: usize,
    tol: f64,
) -> Result<LimitEnsemble>
where
    S: OperatorSequence,
    F: Fn(u64) -> Result<S>,
{
    let plan = match kind {
        EnsembleKind::BackwardLimits => ReplayPlan::backward(),
        EnsembleKind::ForwardTerminals => ReplayPlan::forward(n),
    };
    let mut out = LimitEnsemble {
        kind,
        seeds: seeds.to_vec(),
        points: Vec::with_capacity(seeds.len()),
        convergence_flags: Vec::with_capacity(seeds.len()),
        terminal_displacements: Vec::with_capacity(seeds.len()),
        divergences: Vec::with_capacity(seeds.len()),
        steps_used: n,
        tolerance: tol,
    };
    for &seed in seeds {
        let seq = factory(seed)?;
        match terminal_run(&seq, start, n, &plan) {
            Ok((point, disp)) => {
                out.points.push(point);
                out.convergence_flags.push(disp < tol);
                out.terminal_displacements.push(disp);
                out.divergences.push(None);
            }
            Err(LabError::Divergence { step }) => {
                log::warn!("seed {seed} diverged at step {step}");
                out.points.push(ParamVector::from_raw(vec![f64::NAN; start.dim()]));
                out.convergence_flags.push(false);
                out.terminal_displacements.push(f64::NAN);
                out.divergences.push(Some(step));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Terminal backward iterate `T₁⋯Tₙ(start)` for each seed, flagged converged
/// when the last step moved less than `tol`.
pub fn backward_limit_ensemble<S, F>(
    factory: F,
    start: &ParamVector,
    seeds: &[u64],
    n: usize,
    tol: f64,
) -> Result<LimitEnsemble>
where
    S: OperatorSequence,
    F: Fn(u64) -> Result<S>,
{
    if n < 2 {
        return Err(LabError::Config(format!("backward ensemble needs n >= 2, got {n}")));
    }
    if !(tol > 0.0) {
        return Err(LabError::Config(format!("tolerance must be > 0, got {tol}")));
    }
    collect(EnsembleKind::BackwardLimits, factory, start, seeds, n, tol)
}

/// Terminal forward iterate `Tₙ⋯T₁(start)` for each seed. The convergence
/// flag uses [`DEFAULT_TOLERANCE`] on the last step displacement.
pub fn forward_terminal_ensemble<S, F>(
    factory: F,
    start: &ParamVector,
    seeds: &[u64],
    n: usize,
) -> Result<LimitEnsemble>
where
    S: OperatorSequence,
    F: Fn(u64) -> Result<S>,
{
    collect(EnsembleKind::ForwardTerminals, factory, start, seeds, n, DEFAULT_TOLERANCE)
}

/// Mean and variance of the stationary law of `θ ↦ (1−h)θ + hε` with
/// `ε ~ N(0, σ²)`.
pub fn quadratic_stationary_params(h: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && h < 2.0) {
        return Err(LabError::Config(format!("stationary law needs 0 < h < 2, got {h}")));
    }
    Ok((0.0, h * sigma * sigma / (2.0 - h)))
}

/// `N(mean, variance)` CDF; a point mass when the variance is zero.
pub fn normal_cdf(mean: f64, variance: f64) -> Result<impl Fn(f64) -> f64> {
    let normal = if variance > 0.0 {
        Some(Normal::new(mean, variance.sqrt()).map_err(|e| LabError::Config(e.to_string()))?)
    } else {
        None
    };
    Ok(move |x: f64| match &normal {
        Some(n) => n.cdf(x),
        None => (x >= mean) as u8 as f64,
    })
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One-sample two-sided KS statistic `sup |F_n − F|`, evaluated on both sides
/// of each order statistic.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(LabError::InsufficientData("no samples for KS statistic".into()));
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Two-sample KS statistic `sup |F_a − F_b|` with ties handled exactly.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(LabError::InsufficientData("empty sample for KS statistic".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic KS coefficient `c(α) = √(−ln(α/2)/2)`; 1.628 at α = 0.01.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Critical value of the one-sample test with `n` samples.
pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    ks_coefficient(alpha) / (n as f64).sqrt()
}

/// Critical value of the two-sample test with sizes `n` and `m`.
pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Acceptance thresholds for [`compare_ensembles`]. `None` skips a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareThresholds {
    pub ks_max: Option<f64>,
    pub mean_delta_max: Option<f64>,
    /// Accepted band for the variance ratio `var(a)/var(b)`.
    pub variance_ratio_band: Option<(f64, f64)>,
}

impl CompareThresholds {
    /// A KS bound only, with no moment checks.
    pub fn ks_only(ks_max: f64) -> Self {
        Self {
            ks_max: Some(ks_max),
            mean_delta_max: None,
            variance_ratio_band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateComparison {
    pub coordinate: usize,
    pub ks: f64,
    pub mean_delta: f64,
    /// `var(a)/var(b)`; NaN when both variances vanish, infinite when only
    /// `b`'s does.
    pub variance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub samples_a: usize,
    pub samples_b: usize,
    pub coordinates: Vec<CoordinateComparison>,
    pub pass: bool,
}

impl EnsembleComparison {
    pub fn max_ks(&self) -> f64 {
        self.coordinates.iter().map(|c| c.ks).fold(0.0, f64::max)
    }
}

/// Per-coordinate two-sample KS plus mean and variance summaries over the
/// non-divergent points of each ensemble.
pub fn compare_ensembles(
    a: &LimitEnsemble,
    b: &LimitEnsemble,
    thresholds: &CompareThresholds,
) -> Result<EnsembleComparison> {
    let na = a.finite_points().count();
    let nb = b.finite_points().count();
    if na == 0 || nb == 0 {
        return Err(LabError::InsufficientData(
            "an ensemble has no non-divergent points".into(),
        ));
    }
    let dim = a.finite_points().next().expect("non-empty").dim();
    if b.finite_points().next().expect("non-empty").dim() != dim {
        return Err(LabError::Config("ensembles have different dimensions".into()));
    }
    let mut coords = Vec::with_capacity(dim);
    let mut pass = true;
    for k in 0..dim {
        let xa = a.coordinate(k);
        let xb = b.coordinate(k);
        let ks = ks_two_sample(&xa, &xb)?;
        let (ma, va) = mean_var(&xa);
        let (mb, vb) = mean_var(&xb);
        let ratio = if va == 0.0 && vb == 0.0 { f64::NAN } else { va / vb };
        if let Some(t) = thresholds.ks_max {
            pass &= ks <= t;
        }
        if let Some(t) = thresholds.mean_delta_max {
            pass &= (ma - mb).abs() <= t;
        }
        if let Some((lo, hi)) = thresholds.variance_ratio_band {
            pass &= ratio.is_nan() || (ratio >= lo && ratio <= hi);
        }
        coords.push(CoordinateComparison {
            coordinate: k,
            ks,
            mean_delta: ma - mb,
            variance_ratio: ratio,
        });
    }
    Ok(EnsembleComparison {
        samples_a: na,
        samples_b: nb,
        coordinates: coords,
        pass,
    })
}

/// Writes a comparison as pretty JSON.
pub fn write_comparison(cmp: &EnsembleComparison, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, cmp)?;
    writeln!(out)?;
    Ok(())
}
