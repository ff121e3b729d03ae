use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Square,
    Cos10x,
    Cube,
}

impl DatasetKind {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DatasetKind::Square => x * x,
            DatasetKind::Cos10x => (10.0 * x).cos(),
            DatasetKind::Cube => x * x * x,
        }
    }

    /// Default learning rate for the synthetic regression runs.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            DatasetKind::Square => 0.05,
            DatasetKind::Cos10x | DatasetKind::Cube => 0.02,
        }
    }
}

/// 101 training points `x_i = −1 + 2i/100` and 100 held-out midpoints
/// `x̃_i = −1 + (2i+1)/100`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub kind: DatasetKind,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub test_inputs: Vec<f64>,
    pub test_targets: Vec<f64>,
}

pub fn synthetic_regression_dataset(kind: DatasetKind) -> RegressionDataset {
    let inputs: Vec<f64> = (0..=100).map(|i| -1.0 + 2.0 * i as f64 / 100.0).collect();
    let test_inputs: Vec<f64> = (0..100).map(|i| -1.0 + (2 * i + 1) as f64 / 100.0).collect();
    RegressionDataset {
        kind,
        targets: inputs.iter().map(|&x| kind.eval(x)).collect(),
        test_targets: test_inputs.iter().map(|&x| kind.eval(x)).collect(),
        inputs,
        test_inputs,
    }
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// CSV with columns `split,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["split", "x", "y"])?;
        let rows = self
            .inputs
            .iter()
            .zip(&self.targets)
            .map(|p| ("train", p))
            .chain(self.test_inputs.iter().zip(&self.test_targets).map(|p| ("test", p)));
        for (split, (x, y)) in rows {
            w.write_record([split, &format!("{x:.16e}"), &format!("{y:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
