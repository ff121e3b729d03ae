//! Forward and backward composition of stochastic update operators.
//!
//! An optimizer step is an operator `T_i(θ) = θ + h·V_i(θ)` chosen by the
//! batch drawn at step `i`. The usual (forward) trajectory composes
//! `T_n ⋯ T_1(θ)`; the backward trajectory composes `T_1 ⋯ T_n(θ)`, so the
//! newest operator acts first. For uniformly contractive operators the
//! backward iterates converge to a point while forward iterates only
//! converge in distribution, and the point is a sample from that
//! distribution.
//!
//! * [`engine`]: the trajectory engines.
//! * [`models`]: operator families and loss models.
//! * [`contraction`]: contraction factors, displacement bounds, rate fits.
//! * [`distribution`]: limit ensembles and Kolmogorov–Smirnov comparisons.
//! * [`bracket`]: Lie brackets and the second-order approximate backward
//!   iterate.
//! * [`order_average`]: split-batch updates and the order-average
//!   regularizer.
//! * [`harness`]: experiment configs, run directories, CSV/SVG output.

pub mod bracket;
pub mod contraction;
pub mod distribution;
pub mod engine;
pub mod error;
pub mod harness;
pub mod models;
pub mod operator;
pub mod order_average;
pub mod param;
pub mod rng;

pub use engine::{
    apply_backward_after, apply_backward_naive, apply_forward, apply_intermittent_backward,
    step_displacement_series, Mode, Trajectory, TrajectoryRecord,
};
pub use error::{LabError, Result};
pub use operator::{OperatorSequence, UpdateOperator};
pub use param::ParamVector;
