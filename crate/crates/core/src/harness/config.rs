use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::models::{Activation, BatchSampling, DatasetKind, NoiseModel, HESSIAN_DIM_CAP};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Quadratic,
    Linearized,
    TwoPoint,
    LeastSquares,
    Regression,
}

/// Iteration modes as named in configuration files and CSV file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Forward,
    Backward,
    Intermittent,
    BackwardAfter,
    ApproxBackward,
    OrderAverage,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Forward => "forward",
            RunMode::Backward => "backward",
            RunMode::Intermittent => "intermittent",
            RunMode::BackwardAfter => "backward-after",
            RunMode::ApproxBackward => "approx-backward",
            RunMode::OrderAverage => "order-average",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresParams {
    pub rows: usize,
    pub dim: usize,
    #[serde(default)]
    pub interpolating: bool,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub data_seed: u64,
}

fn one() -> f64 {
    1.0
}

/// Experiment configuration as read from JSON. Absent fields take
/// per-experiment defaults in [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub modes: Vec<RunMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<BatchSampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub least_squares: Option<LeastSquaresParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resets: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
}

/// Model-specific settings after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Quadratic {
        noise: NoiseModel,
    },
    Linearized {
        minimum: ParamVector,
        hessian: Vec<Vec<f64>>,
        noise: NoiseModel,
    },
    TwoPoint {
        x0: ParamVector,
        y0: ParamVector,
    },
    LeastSquares {
        params: LeastSquaresParams,
        batch_size: usize,
        sampling: BatchSampling,
    },
    Regression {
        dataset: DatasetKind,
        widths: Vec<usize>,
        activation: Activation,
        batch_size: usize,
        sampling: BatchSampling,
    },
}

/// A validated configuration with every default filled in. This is what the
/// run manifest echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentKind,
    pub modes: Vec<RunMode>,
    pub learning_rate: f64,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// `None` for the regression experiment, which starts from a seeded
    /// initialization.
    pub start: Option<ParamVector>,
    pub model: ModelSpec,
    pub resets: Vec<usize>,
    pub switch_step: Option<usize>,
    pub lambda: f64,
    pub c: usize,
    pub eval_every: usize,
    pub output_dir: PathBuf,
    pub svg: bool,
}

impl ResolvedConfig {
    pub fn dim(&self) -> usize {
        match &self.model {
            ModelSpec::Quadratic { .. } => 1,
            ModelSpec::Linearized { minimum, .. } => minimum.dim(),
            ModelSpec::TwoPoint { x0, .. } => x0.dim(),
            ModelSpec::LeastSquares { params, .. } => params.dim,
            ModelSpec::Regression { widths, .. } => mlp_param_count(widths),
        }
    }

    pub fn hessian_matrix(&self) -> Option<DMatrix<f64>> {
        match &self.model {
            ModelSpec::Linearized { hessian, .. } => Some(rows_to_matrix(hessian)),
            _ => None,
        }
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn mlp_param_count(widths: &[usize]) -> usize {
    let mut prev = 1;
    let mut total = 0;
    for &w in widths.iter().chain(std::iter::once(&1)) {
        total += w * prev + w;
        prev = w;
    }
    total
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies defaults and checks every field, reporting all problems at
    /// once.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut bad: Vec<String> = Vec::new();
        let kind = self.experiment;

        if self.modes.is_empty() {
            bad.push("modes: at least one mode is required".into());
        }
        let mut modes = self.modes.clone();
        modes.sort();
        if modes.windows(2).any(|w| w[0] == w[1]) {
            bad.push("modes: duplicate entries".into());
        }
        modes = self.modes.clone();

        let steps = self.steps.unwrap_or(match kind {
            ExperimentKind::Regression => 1400,
            ExperimentKind::TwoPoint => 100,
            _ => 400,
        });
        if steps == 0 {
            bad.push("steps: must be >= 1".into());
        }
        let seeds = self.seeds.clone().unwrap_or_else(|| (0..5).collect());
        if seeds.is_empty() {
            bad.push("seeds: at least one seed is required".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            bad.push("seeds: duplicate entries".into());
        }
        let eval_every = self.eval_every.unwrap_or(1);
        if eval_every == 0 {
            bad.push("eval_every: must be >= 1".into());
        }

        let default_rate = match kind {
            ExperimentKind::Regression => self.dataset.unwrap_or(DatasetKind::Square).default_learning_rate(),
            ExperimentKind::TwoPoint => 1.0,
            _ => 0.1,
        };
        let learning_rate = self.learning_rate.unwrap_or(default_rate);
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            bad.push(format!("learning_rate: must be finite and >= 0, got {learning_rate}"));
        }
        if kind == ExperimentKind::TwoPoint && learning_rate != 1.0 {
            bad.push("learning_rate: the two-point experiment uses constant maps (rate 1)".into());
        }

        let unused = |name: &str, present: bool, bad: &mut Vec<String>| {
            if present {
                bad.push(format!("{name}: not used by the {kind:?} experiment"));
            }
        };
        let sampling = self.sampling.unwrap_or_default();
        let model = match kind {
            ExperimentKind::Quadratic => {
                unused("hessian", self.hessian.is_some(), &mut bad);
                unused("minimum", self.minimum.is_some(), &mut bad);
                unused("batch_size", self.batch_size.is_some(), &mut bad);
                ModelSpec::Quadratic {
                    noise: self.noise.unwrap_or_else(|| NoiseModel::gaussian(1.0)),
                }
            }
            ExperimentKind::Linearized => {
                unused("batch_size", self.batch_size.is_some(), &mut bad);
                let hessian = self.hessian.clone().unwrap_or_else(|| vec![vec![1.0, 0.0], vec![0.0, 4.0]]);
                let d = hessian.len();
                if d == 0 || hessian.iter().any(|r| r.len() != d) {
                    bad.push("hessian: must be a non-empty square matrix".into());
                } else {
                    let h = rows_to_matrix(&hessian);
                    if crate::models::check_symmetric(&h).is_err() {
                        bad.push("hessian: must be symmetric".into());
                    } else if nalgebra::SymmetricEigen::new(h).eigenvalues.min() <= 0.0 {
                        bad.push("hessian: must be positive definite".into());
                    }
                }
                let minimum = self.minimum.clone().unwrap_or_else(|| vec![0.0; d]);
                if minimum.len() != d {
                    bad.push(format!("minimum: expected {d} entries, got {}", minimum.len()));
                }
                ModelSpec::Linearized {
                    minimum: ParamVector::from_raw(minimum),
                    hessian,
                    noise: self.noise.unwrap_or_else(|| NoiseModel::gaussian(1.0)),
                }
            }
            ExperimentKind::TwoPoint => {
                unused("noise", self.noise.is_some(), &mut bad);
                unused("batch_size", self.batch_size.is_some(), &mut bad);
                let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0]);
                let y0 = self.y0.clone().unwrap_or_else(|| vec![1.0]);
                if x0.len() != y0.len() || x0.is_empty() {
                    bad.push("x0/y0: must be non-empty and of equal dimension".into());
                } else if x0 == y0 {
                    bad.push("x0/y0: the two targets must differ".into());
                }
                ModelSpec::TwoPoint {
                    x0: ParamVector::from_raw(x0),
                    y0: ParamVector::from_raw(y0),
                }
            }
            ExperimentKind::LeastSquares => {
                unused("noise", self.noise.is_some(), &mut bad);
                let params = self.least_squares.clone().unwrap_or(LeastSquaresParams {
                    rows: 40,
                    dim: 5,
                    interpolating: false,
                    scale: 0.5,
                    data_seed: 0,
                });
                let batch_size = self.batch_size.unwrap_or(4);
                if batch_size == 0 || params.rows % batch_size != 0 {
                    bad.push(format!(
                        "batch_size: must divide least_squares.rows = {} (got {batch_size})",
                        params.rows
                    ));
                }
                if params.rows < params.dim || params.dim == 0 {
                    bad.push("least_squares: need rows >= dim >= 1".into());
                }
                ModelSpec::LeastSquares {
                    params,
                    batch_size,
                    sampling,
                }
            }
            ExperimentKind::Regression => {
                unused("noise", self.noise.is_some(), &mut bad);
                unused("start", self.start.is_some(), &mut bad);
                let widths = self.widths.clone().unwrap_or_else(|| vec![64, 64]);
                if widths.iter().any(|&w| w == 0) {
                    bad.push("widths: every layer width must be positive".into());
                }
                let batch_size = self.batch_size.unwrap_or(1);
                if batch_size == 0 || batch_size > 101 {
                    bad.push(format!("batch_size: must be in [1, 101], got {batch_size}"));
                }
                ModelSpec::Regression {
                    dataset: self.dataset.unwrap_or(DatasetKind::Square),
                    widths,
                    activation: self.activation.unwrap_or_default(),
                    batch_size,
                    sampling,
                }
            }
        };
        if kind != ExperimentKind::Regression {
            unused("widths", self.widths.is_some(), &mut bad);
            unused("activation", self.activation.is_some(), &mut bad);
            unused("dataset", self.dataset.is_some(), &mut bad);
        }
        if kind != ExperimentKind::LeastSquares {
            unused("least_squares", self.least_squares.is_some(), &mut bad);
        }
        if !matches!(kind, ExperimentKind::LeastSquares | ExperimentKind::Regression) {
            unused("sampling", self.sampling.is_some(), &mut bad);
        }

        let mut resolved = ResolvedConfig {
            experiment: kind,
            modes,
            learning_rate,
            steps,
            seeds,
            start: None,
            model,
            resets: self.resets.clone().unwrap_or_default(),
            switch_step: self.switch_step,
            lambda: self.lambda.unwrap_or(0.0),
            c: self.c.unwrap_or(2),
            eval_every,
            output_dir: self
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}", experiment_name(kind)))),
            svg: self.svg.unwrap_or(true),
        };

        let dim = resolved.dim();
        if kind != ExperimentKind::Regression {
            let start = self.start.clone().unwrap_or_else(|| match kind {
                ExperimentKind::Quadratic => vec![1.0],
                _ => vec![1.0; dim],
            });
            if start.len() != dim {
                bad.push(format!("start: expected {dim} entries, got {}", start.len()));
            }
            if start.iter().any(|x| !x.is_finite()) {
                bad.push("start: entries must be finite".into());
            }
            resolved.start = Some(ParamVector::from_raw(start));
        }

        for mode in &resolved.modes {
            match mode {
                RunMode::Intermittent => {
                    if resolved.resets.is_empty() {
                        bad.push("resets: the intermittent mode needs at least one reset".into());
                    }
                    if resolved.resets.windows(2).any(|w| w[0] >= w[1]) {
                        bad.push("resets: must be strictly increasing".into());
                    }
                    if resolved.resets.iter().any(|&r| r == 0 || r > steps) {
                        bad.push(format!("resets: every reset must lie in [1, {steps}]"));
                    }
                }
                RunMode::BackwardAfter => match resolved.switch_step {
                    None => bad.push("switch_step: required by the backward-after mode".into()),
                    Some(s) if s > steps => bad.push(format!("switch_step: {s} exceeds steps = {steps}")),
                    _ => {}
                },
                RunMode::ApproxBackward => {
                    if kind == ExperimentKind::Regression && dim > HESSIAN_DIM_CAP {
                        bad.push(format!(
                            "modes: approx-backward needs Hessians, which are capped at {HESSIAN_DIM_CAP} parameters (this network has {dim})"
                        ));
                    }
                }
                RunMode::OrderAverage => {
                    if !matches!(kind, ExperimentKind::LeastSquares | ExperimentKind::Regression) {
                        bad.push("modes: order-average needs a batch loss model (least-squares or regression)".into());
                    }
                    if !(resolved.lambda >= 0.0) {
                        bad.push(format!("lambda: must be >= 0, got {}", resolved.lambda));
                    }
                    if resolved.c == 0 {
                        bad.push("c: must be >= 1".into());
                    }
                    let bs = match &resolved.model {
                        ModelSpec::LeastSquares { batch_size, .. } | ModelSpec::Regression { batch_size, .. } => *batch_size,
                        _ => 0,
                    };
                    if resolved.c > 0 && bs % resolved.c != 0 {
                        bad.push(format!("c: batch_size {bs} is not divisible by c = {}", resolved.c));
                    }
                    if resolved.lambda > 0.0 && kind == ExperimentKind::Regression && dim > HESSIAN_DIM_CAP {
                        bad.push(format!(
                            "modes: order-average with lambda > 0 needs Hessians, capped at {HESSIAN_DIM_CAP} parameters (this network has {dim})"
                        ));
                    }
                }
                RunMode::Forward | RunMode::Backward => {}
            }
        }
        if let ModelSpec::Regression { batch_size, .. } = &resolved.model {
            if resolved.modes.contains(&RunMode::OrderAverage) && 101 % batch_size != 0 && *batch_size > 1 {
                bad.push(format!(
                    "batch_size: 101 examples do not split evenly into batches of {batch_size}; order-average needs equal batches"
                ));
            }
        }

        if bad.is_empty() {
            Ok(resolved)
        } else {
            Err(LabError::Config(format!("invalid config: {}", bad.join("; "))))
        }
    }
}

pub(crate) fn experiment_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Quadratic => "quadratic",
        ExperimentKind::Linearized => "linearized",
        ExperimentKind::TwoPoint => "two-point",
        ExperimentKind::LeastSquares => "least-squares",
        ExperimentKind::Regression => "regression",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"regression","modes":["forward","backward"]}"#).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.steps, 1400);
        assert_eq!(r.seeds.len(), 5);
        assert_eq!(r.learning_rate, 0.05);
        assert_eq!(r.eval_every, 1);
        assert!(matches!(r.model, ModelSpec::Regression { batch_size: 1, .. }));
        assert_eq!(r.dim(), 4353);
        let cube = ExperimentConfig::from_json(r#"{"experiment":"regression","modes":["forward"],"dataset":"cube"}"#).unwrap();
        assert_eq!(cube.resolve().unwrap().learning_rate, 0.02);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"experiment":"quadratic","modes":["forward"],"bogus":1}"#).unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn all_problems_are_listed() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"quadratic","modes":["intermittent","backward-after","order-average"],"eval_every":0}"#,
        )
        .unwrap();
        let msg = cfg.resolve().unwrap_err().to_string();
        for needle in ["eval_every", "resets", "switch_step", "order-average"] {
            assert!(msg.contains(needle), "{needle} missing from {msg}");
        }
    }

    #[test]
    fn approx_backward_needs_small_network() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment":"regression","modes":["approx-backward"]}"#).unwrap();
        assert!(cfg.resolve().is_err());
        let small = ExperimentConfig::from_json(r#"{"experiment":"regression","modes":["approx-backward"],"widths":[8,8]}"#)
            .unwrap();
        assert!(small.resolve().is_ok());
    }

    #[test]
    fn lambda_sweep_values_are_accepted() {
        for k in [0.5, 1.0, 2.0, 4.0] {
            let lambda = k * 0.1 * 0.1;
            let text = format!(
                r#"{{"experiment":"least-squares","modes":["order-average"],"lambda":{lambda},"c":2}}"#
            );
            assert!(ExperimentConfig::from_json(&text).unwrap().resolve().is_ok());
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [RunMode::Forward, RunMode::BackwardAfter, RunMode::OrderAverage] {
            assert_eq!(RunMode::parse(m.as_str()), Some(m));
        }
        assert_eq!(RunMode::parse("sideways"), None);
    }
}
