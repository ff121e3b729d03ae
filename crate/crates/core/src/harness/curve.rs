use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

use super::config::RunMode;

/// Fixed CSV header of every per-run learning-curve file.
pub const CURVE_COLUMNS: [&str; 5] = ["step", "train_loss", "test_loss", "step_displacement", "dist_to_anchor"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub step_displacement: f64,
    pub dist_to_anchor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    TrainLoss,
    TestLoss,
    StepDisplacement,
    DistToAnchor,
}

impl Column {
    pub fn name(&self) -> &'static str {
        match self {
            Column::TrainLoss => "train_loss",
            Column::TestLoss => "test_loss",
            Column::StepDisplacement => "step_displacement",
            Column::DistToAnchor => "dist_to_anchor",
        }
    }
}

impl CurveRow {
    pub fn get(&self, column: Column) -> Option<f64> {
        match column {
            Column::TrainLoss => self.train_loss,
            Column::TestLoss => self.test_loss,
            Column::StepDisplacement => Some(self.step_displacement),
            Column::DistToAnchor => Some(self.dist_to_anchor),
        }
    }
}

/// One `seed<S>_<mode>.csv` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: u64,
    pub mode: RunMode,
    pub rows: Vec<CurveRow>,
}

pub fn curve_file_name(seed: u64, mode: RunMode) -> String {
    format!("seed{seed}_{}.csv", mode.as_str())
}

/// Inverse of [`curve_file_name`].
pub fn parse_curve_file_name(name: &str) -> Option<(u64, RunMode)> {
    let rest = name.strip_prefix("seed")?.strip_suffix(".csv")?;
    let (seed, mode) = rest.split_once('_')?;
    Some((seed.parse().ok()?, RunMode::parse(mode)?))
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt_num)
}

pub(crate) fn row_record(row: &CurveRow) -> [String; 5] {
    [
        row.step.to_string(),
        fmt_opt(row.train_loss),
        fmt_opt(row.test_loss),
        fmt_num(row.step_displacement),
        fmt_num(row.dist_to_anchor),
    ]
}

fn parse_opt(field: &str, path: &Path) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| LabError::Config(format!("{}: bad number {field:?}", path.display())))
}

impl LearningCurve {
    pub fn read(path: &Path) -> Result<Self> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let (seed, mode) = parse_curve_file_name(name)
            .ok_or_else(|| LabError::Config(format!("{} is not a seed<S>_<mode>.csv file", path.display())))?;
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != CURVE_COLUMNS {
            return Err(LabError::Config(format!("{}: unexpected header {header:?}", path.display())));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let req = |i: usize| -> Result<f64> {
                parse_opt(&rec[i], path)?
                    .ok_or_else(|| LabError::Config(format!("{}: missing {}", path.display(), CURVE_COLUMNS[i])))
            };
            rows.push(CurveRow {
                step: rec[0]
                    .parse()
                    .map_err(|_| LabError::Config(format!("{}: bad step {:?}", path.display(), &rec[0])))?,
                train_loss: parse_opt(&rec[1], path)?,
                test_loss: parse_opt(&rec[2], path)?,
                step_displacement: req(3)?,
                dist_to_anchor: req(4)?,
            });
        }
        Ok(Self { seed, mode, rows })
    }

    /// Every learning-curve file in `dir`, sorted by seed then mode.
    pub fn read_dir(dir: &Path) -> Result<Vec<Self>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| parse_curve_file_name(n).is_some())
            })
            .collect();
        paths.sort();
        let mut curves = paths.iter().map(|p| Self::read(p)).collect::<Result<Vec<_>>>()?;
        curves.sort_by_key(|c| (c.seed, c.mode));
        Ok(curves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_round_trip() {
        let n = curve_file_name(42, RunMode::BackwardAfter);
        assert_eq!(n, "seed42_backward-after.csv");
        assert_eq!(parse_curve_file_name(&n), Some((42, RunMode::BackwardAfter)));
        assert_eq!(parse_curve_file_name("ensemble_forward.csv"), None);
        assert_eq!(parse_curve_file_name("seedx_forward.csv"), None);
    }

    #[test]
    fn numbers_use_seventeen_significant_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_opt(None), "");
        let back: f64 = fmt_num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
