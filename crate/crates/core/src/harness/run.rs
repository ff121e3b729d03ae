use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bracket::approx_backward_observe;
use crate::contraction::{
    displacement_bound_check, empirical_contraction_estimate, exponential_rate_fit, gd_operator_norm_factor,
    ContractionReport,
};
use crate::distribution::{EnsembleKind, LimitEnsemble, DEFAULT_TOLERANCE};
use crate::engine::{apply_backward_naive, drive};
use crate::error::{LabError, Result};
use crate::operator::OperatorSequence;
use crate::param::ParamVector;

use super::config::{ExperimentConfig, ExperimentKind, ModelSpec, ResolvedConfig, RunMode};
use super::curve::{curve_file_name, row_record, CurveRow, LearningCurve, CURVE_COLUMNS};
use super::experiment::{plan_for, Built};
use super::svg::{emit_svg, PlotSpec};
use super::curve::Column;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Ensembles are written only up to this dimension.
pub const ENSEMBLE_DIM_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Finished with terminal step displacement below 1e-10.
    Converged,
    Completed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub mode: RunMode,
    /// Descriptive tag, e.g. `order-average(λ=0.005)`.
    pub tag: String,
    pub file: String,
    pub status: RunStatus,
    pub diverged_step: Option<usize>,
    pub rows: usize,
    pub terminal_displacement: Option<f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestState {
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub state: ManifestState,
    pub config: ResolvedConfig,
    pub initialization: Option<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
    pub runs: Vec<RunEntry>,
    /// File name → SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// Seeds at least one of whose runs diverged.
    pub fn diverged_seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self
            .runs
            .iter()
            .filter(|r| r.status == RunStatus::Diverged)
            .map(|r| r.seed)
            .collect();
        s.dedup();
        s
    }

    pub fn all_seeds_diverged(&self) -> bool {
        self.diverged_seeds().len() == self.config.seeds.len()
    }
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct Outcome {
    rows: usize,
    terminal: ParamVector,
    terminal_displacement: Option<f64>,
    diverged: Option<usize>,
}

fn mode_tag(cfg: &ResolvedConfig, mode: RunMode) -> String {
    match mode {
        RunMode::OrderAverage => format!("order-average(λ={})", cfg.lambda),
        m => m.as_str().to_string(),
    }
}

fn run_one(
    cfg: &ResolvedConfig,
    built: &Built,
    seq: &dyn OperatorSequence,
    start: &ParamVector,
    mode: RunMode,
    path: &Path,
) -> Result<Outcome> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_COLUMNS)?;
    let n = cfg.steps;
    let every = cfg.eval_every;
    let mut rows = 0usize;
    let mut last = (start.clone(), None);
    let mut write_row = |w: &mut csv::Writer<fs::File>, step: usize, x: &ParamVector, disp: f64, anchor: &ParamVector| -> Result<()> {
        let (train_loss, test_loss) = built.losses(x);
        w.write_record(row_record(&CurveRow {
            step,
            train_loss,
            test_loss,
            step_displacement: disp,
            dist_to_anchor: x.distance(anchor),
        }))?;
        rows += 1;
        Ok(())
    };

    let result = match plan_for(cfg, mode) {
        Some(plan) => drive(seq, start, n, &plan, every, &mut |view| {
            write_row(&mut w, view.step, view.iterate, view.displacement, view.anchor)?;
            last = (view.iterate.clone(), Some(view.displacement));
            Ok(())
        }),
        None => {
            let mut prev = start.clone();
            approx_backward_observe(seq, start, n, &mut |m, approx, _| {
                if m % every == 0 || m == n {
                    let disp = approx.distance(&prev);
                    write_row(&mut w, m, approx, disp, start)?;
                    last = (approx.clone(), Some(disp));
                }
                prev = approx.clone();
                Ok(())
            })
            .map(|_| last.0.clone())
        }
    };
    w.flush()?;
    match result {
        Ok(_) => Ok(Outcome {
            rows,
            terminal: last.0,
            terminal_displacement: last.1,
            diverged: None,
        }),
        Err(LabError::Divergence { step }) => Ok(Outcome {
            rows,
            terminal: ParamVector::from_raw(vec![f64::NAN; start.dim()]),
            terminal_displacement: None,
            diverged: Some(step),
        }),
        Err(e) => Err(e),
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Loads, validates and runs a configuration file. `output_dir` overrides
/// the configured directory.
pub fn run_config_file(path: &Path, output_dir: Option<&Path>) -> Result<RunSummary> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = Some(dir.to_path_buf());
    }
    run_experiment(&cfg)
}

/// Runs every (seed, mode) pair and writes the run directory: the manifest
/// (first, then finalized last), one learning-curve CSV per pair, terminal
/// ensembles, per-seed SVG plots and, where applicable, a contraction
/// report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let cfg = config.resolve()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let built = Built::new(&cfg)?;

    let initialization = matches!(cfg.model, ModelSpec::Regression { .. })
        .then(|| "uniform U(±1/√fan_in) for every weight and bias, drawn from the run seed".to_string());
    let mut manifest = RunManifest {
        tool: "bwdlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        state: ManifestState::Running,
        config: cfg.clone(),
        initialization,
        started_unix_ms: unix_ms(),
        finished_unix_ms: None,
        runs: Vec::new(),
        artifacts: BTreeMap::new(),
    };
    manifest.write(&dir)?;

    let mut files: Vec<String> = Vec::new();
    let mut terminals: BTreeMap<RunMode, Vec<(u64, ParamVector, Option<f64>, Option<usize>)>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        let start = built.start(&cfg, seed);
        for &mode in &cfg.modes {
            let seq = built.sequence(&cfg, seed, mode)?;
            let file = curve_file_name(seed, mode);
            let t0 = Instant::now();
            let out = run_one(&cfg, &built, seq.as_ref(), &start, mode, &dir.join(&file))?;
            let status = match (out.diverged, out.terminal_displacement) {
                (Some(step), _) => {
                    log::warn!("seed {seed} {mode}: diverged at step {step}");
                    RunStatus::Diverged
                }
                (None, Some(d)) if d < DEFAULT_TOLERANCE => RunStatus::Converged,
                _ => RunStatus::Completed,
            };
            log::info!("seed {seed} {mode}: {status:?} in {:.3}s", t0.elapsed().as_secs_f64());
            manifest.runs.push(RunEntry {
                seed,
                mode,
                tag: mode_tag(&cfg, mode),
                file: file.clone(),
                status,
                diverged_step: out.diverged,
                rows: out.rows,
                terminal_displacement: out.terminal_displacement,
                wall_clock_s: t0.elapsed().as_secs_f64(),
            });
            files.push(file);
            terminals
                .entry(mode)
                .or_default()
                .push((seed, out.terminal, out.terminal_displacement, out.diverged));
        }
    }

    if cfg.dim() <= ENSEMBLE_DIM_CAP {
        for (mode, items) in &terminals {
            let ens = LimitEnsemble {
                kind: if matches!(mode, RunMode::Forward | RunMode::OrderAverage) {
                    EnsembleKind::ForwardTerminals
                } else {
                    EnsembleKind::BackwardLimits
                },
                seeds: items.iter().map(|i| i.0).collect(),
                points: items.iter().map(|i| i.1.clone()).collect(),
                convergence_flags: items.iter().map(|i| i.2.is_some_and(|d| d < DEFAULT_TOLERANCE)).collect(),
                terminal_displacements: items.iter().map(|i| i.2.unwrap_or(f64::NAN)).collect(),
                divergences: items.iter().map(|i| i.3).collect(),
                steps_used: cfg.steps,
                tolerance: DEFAULT_TOLERANCE,
            };
            let name = format!("ensemble_{}.csv", mode.as_str());
            ens.write_csv(&dir.join(&name))?;
            files.push(name);
        }
    }

    if cfg.svg {
        let curves = LearningCurve::read_dir(&dir)?;
        files.extend(write_seed_plots(&dir, &curves, false)?);
    }

    if let Some(report) = contraction_report(&cfg, &built)? {
        let name = "contraction.json".to_string();
        fs::write(dir.join(&name), serde_json::to_string_pretty(&report)? + "\n")?;
        files.push(name);
    }

    for f in &files {
        manifest.artifacts.insert(f.clone(), sha256_file(&dir.join(f))?);
    }
    manifest.state = ManifestState::Finished;
    manifest.finished_unix_ms = Some(unix_ms());
    manifest.write(&dir)?;
    Ok(RunSummary { dir, manifest })
}

/// Writes `plot_seed<S>.svg` per seed, one polyline per mode. Plots train
/// loss when present, step displacement otherwise. Returns the file names.
pub fn write_seed_plots(dir: &Path, curves: &[LearningCurve], log_y: bool) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let mut seeds: Vec<u64> = curves.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    for seed in seeds {
        let group: Vec<LearningCurve> = curves.iter().filter(|c| c.seed == seed && !c.rows.is_empty()).cloned().collect();
        if group.is_empty() {
            continue;
        }
        let has_loss = group.iter().any(|c| c.rows.iter().any(|r| r.train_loss.is_some()));
        let column = if has_loss { Column::TrainLoss } else { Column::StepDisplacement };
        let spec = PlotSpec {
            column,
            log_y,
            title: format!("seed {seed}: {}", column.name()),
        };
        let svg = emit_svg(&group, &spec)?;
        let name = format!("plot_seed{seed}.svg");
        fs::write(dir.join(&name), svg)?;
        names.push(name);
    }
    Ok(names)
}

fn contraction_report(cfg: &ResolvedConfig, built: &Built) -> Result<Option<ContractionReport>> {
    if !matches!(cfg.experiment, ExperimentKind::Quadratic | ExperimentKind::Linearized | ExperimentKind::LeastSquares)
        || !cfg.modes.contains(&RunMode::Backward)
    {
        return Ok(None);
    }
    let h = cfg.learning_rate;
    let seed = cfg.seeds[0];
    let seq = built.sequence(cfg, seed, RunMode::Backward)?;
    let start = built.start(cfg, seed);
    let analytic = match cfg.experiment {
        ExperimentKind::Quadratic => Some((1.0 - h).abs()),
        ExperimentKind::Linearized => Some(gd_operator_norm_factor(&cfg.hessian_matrix().expect("linearized"), h)?),
        _ => None,
    };
    let op = seq.operator(1);
    let empirical = empirical_contraction_estimate(op.as_ref(), &start, 1.0, 200, seed)?;
    let disp = displacement_bound_check(seq.as_ref(), &start, cfg.steps, None)?;
    let traj = match apply_backward_naive(seq.as_ref(), &start, cfg.steps) {
        Ok(t) => t,
        Err(LabError::Divergence { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let fit = match exponential_rate_fit(&traj, traj.terminal()) {
        Ok(f) => f,
        Err(LabError::InsufficientData(msg)) => {
            log::warn!("no contraction report: {msg}");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    Ok(Some(ContractionReport::assemble(analytic, empirical, &disp, start, &fit)))
}
