use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// A point in parameter space with the Euclidean metric.
///
/// [`ParamVector::new`] enforces a positive dimension and finite entries.
/// Arithmetic helpers do not re-check finiteness; trajectory engines check
/// every iterate they record and report a divergence instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LabError::Config("parameter vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Config(format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    /// Builds a vector without validation. Callers that produce iterates this
    /// way are expected to run [`ParamVector::is_finite`] before trusting them.
    #[inline]
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self + alpha * x`.
    pub fn add_scaled(&self, alpha: f64, x: &Self) -> Self {
        debug_assert_eq!(self.dim(), x.dim());
        Self(self.0.iter().zip(&x.0).map(|(a, b)| a + alpha * b).collect())
    }

    /// In-place `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        debug_assert_eq!(self.dim(), x.dim());
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|a| alpha * a).collect())
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Self {
        Self(v.iter().copied().collect())
    }

    /// `m * self`.
    pub fn mat_mul(m: &DMatrix<f64>, v: &Self) -> Self {
        debug_assert_eq!(m.ncols(), v.dim());
        let mut out = vec![0.0; m.nrows()];
        for (j, &vj) in v.0.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += m[(i, j)] * vj;
            }
        }
        Self(out)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<f64> for ParamVector {
    fn from(x: f64) -> Self {
        Self::scalar(x)
    }
}
