//! Update operators `T_i(θ) = θ + h·V_i(θ)` and seeded operator sequences.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::param::ParamVector;

/// One step map of an iterative optimizer.
///
/// `apply` is mandatory. The vector field and its Jacobian are optional
/// capabilities; when `field` is provided, `apply(θ)` must equal
/// `θ + h·field(θ)` up to rounding, and a Jacobian is only meaningful when
/// the field is present.
pub trait UpdateOperator {
    /// 1-based batch index.
    fn index(&self) -> usize;
    fn learning_rate(&self) -> f64;
    fn apply(&self, theta: &ParamVector) -> ParamVector;

    fn field(&self, _theta: &ParamVector) -> Option<ParamVector> {
        None
    }

    fn field_jacobian(&self, _theta: &ParamVector) -> Option<DMatrix<f64>> {
        None
    }
}

/// A deterministic stream `T_1, T_2, …`.
///
/// The operator at index `i` must be a pure function of `(i, seed)`: engines
/// regenerate operators on every replay instead of caching them.
pub trait OperatorSequence: Sync {
    fn seed(&self) -> u64;

    /// Dimension of the parameter space the operators act on.
    fn dim(&self) -> usize;

    /// `None` for unbounded streams.
    fn len(&self) -> Option<usize> {
        None
    }

    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_>;

    /// `T_index(θ)`. Sequences with cheap operators override this to skip the
    /// boxed operator.
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        self.operator(index).apply(theta)
    }
}

impl<S: OperatorSequence + ?Sized> OperatorSequence for &S {
    fn seed(&self) -> u64 {
        (**self).seed()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn len(&self) -> Option<usize> {
        (**self).len()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        (**self).operator(index)
    }
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        (**self).apply_at(index, theta)
    }
}

impl<S: OperatorSequence + ?Sized> OperatorSequence for Box<S> {
    fn seed(&self) -> u64 {
        (**self).seed()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn len(&self) -> Option<usize> {
        (**self).len()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        (**self).operator(index)
    }
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        (**self).apply_at(index, theta)
    }
}

pub type FieldFn = Arc<dyn Fn(&ParamVector) -> ParamVector + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&ParamVector) -> DMatrix<f64> + Send + Sync>;

/// An operator defined directly by a vector field (and optionally its
/// Jacobian).
#[derive(Clone)]
pub struct FieldOperator {
    index: usize,
    h: f64,
    field: FieldFn,
    jacobian: Option<JacobianFn>,
}

impl FieldOperator {
    pub fn new(index: usize, h: f64, field: FieldFn, jacobian: Option<JacobianFn>) -> Self {
        Self {
            index,
            h,
            field,
            jacobian,
        }
    }

    pub fn with_index(&self, index: usize) -> Self {
        Self {
            index,
            ..self.clone()
        }
    }
}

impl std::fmt::Debug for FieldOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldOperator")
            .field("index", &self.index)
            .field("h", &self.h)
            .field("jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl UpdateOperator for FieldOperator {
    fn index(&self) -> usize {
        self.index
    }
    fn learning_rate(&self) -> f64 {
        self.h
    }
    fn apply(&self, theta: &ParamVector) -> ParamVector {
        theta.add_scaled(self.h, &(self.field)(theta))
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        Some((self.field)(theta))
    }
    fn field_jacobian(&self, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(theta))
    }
}

/// A finite sequence given by an explicit operator list; `T_i` is
/// `ops[i - 1]`.
#[derive(Debug, Clone)]
pub struct FixedSequence {
    ops: Vec<FieldOperator>,
    dim: usize,
    seed: u64,
}

impl FixedSequence {
    pub fn new(ops: Vec<FieldOperator>, dim: usize) -> Self {
        let ops = ops
            .into_iter()
            .enumerate()
            .map(|(i, op)| op.with_index(i + 1))
            .collect();
        Self { ops, dim, seed: 0 }
    }
}

impl OperatorSequence for FixedSequence {
    fn seed(&self) -> u64 {
        self.seed
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> Option<usize> {
        Some(self.ops.len())
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(self.ops[index - 1].clone())
    }
}

/// Wraps a sequence and counts every operator application.
pub struct CountingSequence<S> {
    inner: S,
    applications: AtomicU64,
}

impl<S: OperatorSequence> CountingSequence<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            applications: AtomicU64::new(0),
        }
    }

    pub fn applications(&self) -> u64 {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.applications.store(0, Ordering::Relaxed);
    }
}

struct CountingOperator<'a> {
    inner: Box<dyn UpdateOperator + 'a>,
    counter: &'a AtomicU64,
}

impl UpdateOperator for CountingOperator<'_> {
    fn index(&self) -> usize {
        self.inner.index()
    }
    fn learning_rate(&self) -> f64 {
        self.inner.learning_rate()
    }
    fn apply(&self, theta: &ParamVector) -> ParamVector {
        self.counter.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(theta)
    }
    fn field(&self, theta: &ParamVector) -> Option<ParamVector> {
        self.inner.field(theta)
    }
    fn field_jacobian(&self, theta: &ParamVector) -> Option<DMatrix<f64>> {
        self.inner.field_jacobian(theta)
    }
}

impl<S: OperatorSequence> OperatorSequence for CountingSequence<S> {
    fn seed(&self) -> u64 {
        self.inner.seed()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn len(&self) -> Option<usize> {
        self.inner.len()
    }
    fn operator(&self, index: usize) -> Box<dyn UpdateOperator + '_> {
        Box::new(CountingOperator {
            inner: self.inner.operator(index),
            counter: &self.applications,
        })
    }
    fn apply_at(&self, index: usize, theta: &ParamVector) -> ParamVector {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_at(index, theta)
    }
}
