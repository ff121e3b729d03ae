use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distribution::{
    compare_ensembles, ks_critical_one_sample, ks_critical_two_sample, ks_statistic, normal_cdf,
    quadratic_stationary_params, CompareThresholds, EnsembleKind, LimitEnsemble,
};
use crate::error::{LabError, Result};
use crate::models::NoiseKind;
use crate::param::ParamVector;

use super::config::{ModelSpec, RunMode};
use super::curve::LearningCurve;
use super::run::RunManifest;

/// Windowed statistics of one learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub seed: u64,
    pub mode: RunMode,
    pub window: usize,
    /// Sample variance of train loss over the window; absent when the curve
    /// has no train loss there.
    pub loss_variance: Option<f64>,
    pub max_displacement: f64,
}

/// Backward against forward on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub forward_variance: Option<f64>,
    pub backward_variance: Option<f64>,
    /// Backward max displacement over forward max displacement.
    pub displacement_ratio: f64,
    /// Backward loss variance strictly below forward.
    pub backward_more_stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub window: usize,
    pub rows: Vec<StabilityRow>,
    pub comparisons: Vec<SeedComparison>,
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Loss variance and maximum step displacement over the last `window`
/// recorded rows of each curve, reported per seed and never averaged
/// across seeds.
pub fn stability_report(curves: &[LearningCurve], window: usize) -> Result<StabilityReport> {
    if window < 2 {
        return Err(LabError::Precondition(format!("window must be >= 2, got {window}")));
    }
    let mut rows = Vec::with_capacity(curves.len());
    for c in curves {
        if window > c.rows.len() {
            return Err(LabError::Precondition(format!(
                "window {window} exceeds the {} recorded steps of seed {} {}",
                c.rows.len(),
                c.seed,
                c.mode
            )));
        }
        let tail = &c.rows[c.rows.len() - window..];
        let losses: Option<Vec<f64>> = tail.iter().map(|r| r.train_loss).collect();
        rows.push(StabilityRow {
            seed: c.seed,
            mode: c.mode,
            window,
            loss_variance: losses.map(|l| sample_variance(&l)),
            max_displacement: tail.iter().map(|r| r.step_displacement).fold(0.0, f64::max),
        });
    }
    let mut comparisons = Vec::new();
    for f in rows.iter().filter(|r| r.mode == RunMode::Forward) {
        if let Some(b) = rows.iter().find(|r| r.mode == RunMode::Backward && r.seed == f.seed) {
            comparisons.push(SeedComparison {
                seed: f.seed,
                forward_variance: f.loss_variance,
                backward_variance: b.loss_variance,
                displacement_ratio: b.max_displacement / f.max_displacement,
                backward_more_stable: matches!((b.loss_variance, f.loss_variance), (Some(bv), Some(fv)) if bv < fv),
            });
        }
    }
    Ok(StabilityReport {
        window,
        rows,
        comparisons,
    })
}

/// Reads a terminal-point ensemble written by a run.
pub fn read_ensemble(path: &Path, kind: EnsembleKind, steps: usize, tolerance: f64) -> Result<LimitEnsemble> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut ens = LimitEnsemble {
        kind,
        seeds: Vec::new(),
        points: Vec::new(),
        convergence_flags: Vec::new(),
        terminal_displacements: Vec::new(),
        divergences: Vec::new(),
        steps_used: steps,
        tolerance,
    };
    let bad = |what: &str| LabError::Config(format!("{}: bad {what}", path.display()));
    for rec in reader.records() {
        let rec = rec?;
        ens.seeds.push(rec[0].parse().map_err(|_| bad("seed"))?);
        ens.convergence_flags.push(rec[1].parse().map_err(|_| bad("converged flag"))?);
        ens.divergences.push(if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse().map_err(|_| bad("diverged step"))?)
        });
        let coords = rec
            .iter()
            .skip(3)
            .map(|x| x.parse::<f64>().map_err(|_| bad("coordinate")))
            .collect::<Result<Vec<_>>>()?;
        ens.points.push(ParamVector::from_raw(coords));
        ens.terminal_displacements.push(f64::NAN);
    }
    Ok(ens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// One-sample KS against the quadratic model's stationary normal law.
    Analytic,
    /// Two-sample KS between backward and forward terminals.
    TwoSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistCheck {
    pub name: String,
    pub samples: usize,
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistTestReport {
    pub reference: Reference,
    pub alpha: f64,
    pub checks: Vec<DistCheck>,
    pub pass: bool,
}

/// Distribution tests on a run directory's terminal ensembles at level
/// `alpha`, over non-divergent seeds.
///
/// The two-sample test uses backward terminals from the first half of the
/// seed list and forward terminals from the second half, so the samples are
/// independent.
pub fn dist_test(run_dir: &Path, reference: Reference, alpha: f64) -> Result<DistTestReport> {
    let manifest = RunManifest::read(run_dir)?;
    let cfg = &manifest.config;
    let load = |mode: RunMode, kind| -> Result<LimitEnsemble> {
        let path = run_dir.join(format!("ensemble_{}.csv", mode.as_str()));
        if !path.exists() {
            return Err(LabError::InsufficientData(format!(
                "{} not found; the run needs the {mode} mode",
                path.display()
            )));
        }
        read_ensemble(&path, kind, cfg.steps, crate::distribution::DEFAULT_TOLERANCE)
    };
    let mut checks = Vec::new();
    match reference {
        Reference::Analytic => {
            let sigma = match &cfg.model {
                ModelSpec::Quadratic { noise } if noise.kind == NoiseKind::Gaussian => noise.scale,
                _ => {
                    return Err(LabError::Config(
                        "the analytic reference exists only for the quadratic experiment with Gaussian noise".into(),
                    ))
                }
            };
            let (mean, var) = quadratic_stationary_params(cfg.learning_rate, sigma)?;
            let cdf = normal_cdf(mean, var)?;
            for (mode, kind) in [
                (RunMode::Backward, EnsembleKind::BackwardLimits),
                (RunMode::Forward, EnsembleKind::ForwardTerminals),
            ] {
                if !cfg.modes.contains(&mode) {
                    continue;
                }
                let ens = load(mode, kind)?;
                let x = ens.coordinate(0);
                if x.is_empty() {
                    return Err(LabError::InsufficientData(format!("every {mode} seed diverged")));
                }
                let stat = ks_statistic(&x, &cdf)?;
                let critical = ks_critical_one_sample(x.len(), alpha);
                checks.push(DistCheck {
                    name: format!("{mode} vs N({mean}, {var:.6e})"),
                    samples: x.len(),
                    statistic: stat,
                    critical,
                    pass: stat < critical,
                });
            }
        }
        Reference::TwoSample => {
            let b = load(RunMode::Backward, EnsembleKind::BackwardLimits)?;
            let f = load(RunMode::Forward, EnsembleKind::ForwardTerminals)?;
            let half = cfg.seeds.len() / 2;
            if half == 0 {
                return Err(LabError::InsufficientData("two-sample test needs at least two seeds".into()));
            }
            let first: Vec<u64> = cfg.seeds[..half].to_vec();
            let keep = |e: &LimitEnsemble, want_first: bool| -> LimitEnsemble {
                let mut out = e.clone();
                let idx: Vec<usize> = (0..e.len()).filter(|&i| first.contains(&e.seeds[i]) == want_first).collect();
                out.seeds = idx.iter().map(|&i| e.seeds[i]).collect();
                out.points = idx.iter().map(|&i| e.points[i].clone()).collect();
                out.convergence_flags = idx.iter().map(|&i| e.convergence_flags[i]).collect();
                out.terminal_displacements = idx.iter().map(|&i| e.terminal_displacements[i]).collect();
                out.divergences = idx.iter().map(|&i| e.divergences[i]).collect();
                out
            };
            let (b, f) = (keep(&b, true), keep(&f, false));
            let (nb, nf) = (b.finite_points().count(), f.finite_points().count());
            let critical = ks_critical_two_sample(nb.max(1), nf.max(1), alpha);
            let cmp = compare_ensembles(&b, &f, &CompareThresholds::ks_only(critical))?;
            for c in &cmp.coordinates {
                checks.push(DistCheck {
                    name: format!("backward vs forward, coordinate {}", c.coordinate),
                    samples: nb.min(nf),
                    statistic: c.ks,
                    critical,
                    pass: c.ks < critical,
                });
            }
        }
    }
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    Ok(DistTestReport {
        reference,
        alpha,
        checks,
        pass,
    })
}
