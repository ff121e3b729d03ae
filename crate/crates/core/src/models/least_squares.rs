//! Linear least squares split into batches,
//! `L_B(θ) = (1/|B|) Σ_{r∈B} (a_rᵀθ − b_r)²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LabError, Result};
use crate::param::ParamVector;
use crate::rng::{stream, Draws};

use super::{contiguous_partition, BatchLossModel};

#[derive(Debug, Clone)]
pub struct LeastSquaresModel {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    batches: Vec<Vec<usize>>,
}

/// Validates and builds a least-squares model. `A` must have full column
/// rank and every batch must be a non-empty set of valid row indices.
pub fn least_squares_model(
    design: DMatrix<f64>,
    targets: DVector<f64>,
    batches: Vec<Vec<usize>>,
) -> Result<LeastSquaresModel> {
    LeastSquaresModel::new(design, targets, batches)
}

impl LeastSquaresModel {
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>, batches: Vec<Vec<usize>>) -> Result<Self> {
        let (rows, cols) = design.shape();
        if rows != targets.len() {
            return Err(LabError::Config(format!(
                "design has {rows} rows but {} targets",
                targets.len()
            )));
        }
        if cols == 0 || rows < cols {
            return Err(LabError::Config(format!(
                "design {rows}x{cols} cannot have full column rank"
            )));
        }
        let gram = design.transpose() * &design;
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 1e-10 * max.max(1e-300)) {
            return Err(LabError::Config(
                "design matrix is rank deficient (least squares is not strictly convex)".into(),
            ));
        }
        if batches.is_empty() || batches.iter().any(Vec::is_empty) {
            return Err(LabError::Config("batches must be non-empty".into()));
        }
        if let Some(bad) = batches.iter().flatten().find(|&&r| r >= rows) {
            return Err(LabError::Config(format!("batch references row {bad} of {rows}")));
        }
        Ok(Self {
            design,
            targets,
            batches,
        })
    }

    /// Random Gaussian design with `rows` rows split into `batch_count`
    /// contiguous batches. With `interpolating`, targets are `A θ̄` for a
    /// random `θ̄` (returned by [`LeastSquaresModel::interpolant`]);
    /// otherwise unit Gaussian noise is added. `scale` multiplies the design.
    pub fn synthetic(
        rows: usize,
        dim: usize,
        batch_count: usize,
        interpolating: bool,
        scale: f64,
        data_seed: u64,
    ) -> Result<Self> {
        if batch_count == 0 || batch_count > rows {
            return Err(LabError::Config(format!(
                "cannot split {rows} rows into {batch_count} batches"
            )));
        }
        let mut draws = Draws::new(data_seed, stream::DATA, 0);
        let design = DMatrix::from_fn(rows, dim, |_, _| scale * draws.gaussian());
        let truth = Self::draw_interpolant(data_seed, dim);
        let mut targets = &design * truth.to_dvector();
        if !interpolating {
            let mut noise = Draws::new(data_seed, stream::DATA, 2);
            for t in targets.iter_mut() {
                *t += noise.gaussian();
            }
        }
        Self::new(design, targets, contiguous_partition(rows, batch_count))
    }

    fn draw_interpolant(data_seed: u64, dim: usize) -> ParamVector {
        let mut draws = Draws::new(data_seed, stream::DATA, 1);
        ParamVector::from_raw((0..dim).map(|_| draws.gaussian()).collect())
    }

    /// The `θ̄` used to generate interpolating targets.
    pub fn interpolant(data_seed: u64, dim: usize) -> ParamVector {
        Self::draw_interpolant(data_seed, dim)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    fn residual(&self, r: usize, theta: &ParamVector) -> f64 {
        let row = self.design.row(r);
        row.iter().zip(theta.as_slice()).map(|(a, t)| a * t).sum::<f64>() - self.targets[r]
    }

    pub fn analytic_hessian(&self, examples: &[usize]) -> DMatrix<f64> {
        let d = self.design.ncols();
        let mut h = DMatrix::zeros(d, d);
        for &r in examples {
            let row = self.design.row(r).transpose();
            h += &row * row.transpose();
        }
        h * (2.0 / examples.len() as f64)
    }

    /// `(m, M)`: extreme eigenvalues of the subset Hessian.
    pub fn convexity_constants(&self, examples: &[usize]) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.analytic_hessian(examples));
        (eig.eigenvalues.min(), eig.eigenvalues.max())
    }

    pub fn all_examples(&self) -> Vec<usize> {
        (0..self.design.nrows()).collect()
    }
}

impl BatchLossModel for LeastSquaresModel {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn example_count(&self) -> usize {
        self.design.nrows()
    }

    fn batch_count(&self) -> usize {
        self.batches.len()
    }

    fn batch(&self, i: usize) -> &[usize] {
        &self.batches[i - 1]
    }

    fn subset_loss(&self, examples: &[usize], theta: &ParamVector) -> f64 {
        examples
            .iter()
            .map(|&r| self.residual(r, theta).powi(2))
            .sum::<f64>()
            / examples.len() as f64
    }

    fn subset_gradient(&self, examples: &[usize], theta: &ParamVector) -> ParamVector {
        let d = self.design.ncols();
        let mut g = vec![0.0; d];
        let w = 2.0 / examples.len() as f64;
        for &r in examples {
            let res = self.residual(r, theta);
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += w * res * self.design[(r, j)];
            }
        }
        ParamVector::from_raw(g)
    }

    fn subset_hessian(&self, examples: &[usize], _theta: &ParamVector) -> Option<DMatrix<f64>> {
        Some(self.analytic_hessian(examples))
    }
}
