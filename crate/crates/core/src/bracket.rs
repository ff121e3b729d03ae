//! Lie brackets of update fields, the second-order composition expansion,
//! the bracket-corrected approximate backward iterate and an
//! order-of-accuracy checker.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::{Mode, Trajectory};
use crate::error::{LabError, Result};
use crate::models::SgdSequence;
use crate::operator::{OperatorSequence, UpdateOperator};
use crate::param::ParamVector;

/// Errors at or below this are treated as round-off by [`order_check`].
pub const ORDER_ERROR_FLOOR: f64 = 1e-13;

fn field_of(op: &dyn UpdateOperator, theta: &ParamVector) -> Result<ParamVector> {
    op.field(theta).ok_or(LabError::Capability {
        index: op.index(),
        what: "vector field",
    })
}

fn jacobian_of(op: &dyn UpdateOperator, theta: &ParamVector) -> Result<DMatrix<f64>> {
    op.field_jacobian(theta).ok_or(LabError::Capability {
        index: op.index(),
        what: "field Jacobian",
    })
}

/// `[V_i, V_j](θ) = V_i′(θ)V_j(θ) − V_j′(θ)V_i(θ)`.
pub fn lie_bracket(
    vi: &dyn UpdateOperator,
    vj: &dyn UpdateOperator,
    theta: &ParamVector,
) -> Result<ParamVector> {
    let (fi, ji) = (field_of(vi, theta)?, jacobian_of(vi, theta)?);
    let (fj, jj) = (field_of(vj, theta)?, jacobian_of(vj, theta)?);
    Ok(ParamVector::mat_mul(&ji, &fj).sub(&ParamVector::mat_mul(&jj, &fi)))
}

fn common_rate(ops: &[&dyn UpdateOperator]) -> Result<f64> {
    let h = ops
        .first()
        .ok_or_else(|| LabError::Config("expansion needs at least one operator".into()))?
        .learning_rate();
    if let Some(op) = ops.iter().find(|op| op.learning_rate() != h) {
        return Err(LabError::Config(format!(
            "operator {} has learning rate {} but operator {} has {h}",
            op.index(),
            op.learning_rate(),
            ops[0].index()
        )));
    }
    Ok(h)
}

/// Second-order expansion of the composition `T_{i₁}⋯T_{i_k}(θ)`:
/// `θ + hΣ V_{i_l}(θ) + h²Σ_{u<v} V′_{i_u}(θ)V_{i_v}(θ)`. The Jacobian of the
/// earlier-listed operator, which is applied last, multiplies the later
/// field.
pub fn second_order_expansion(ops: &[&dyn UpdateOperator], theta: &ParamVector) -> Result<ParamVector> {
    let h = common_rate(ops)?;
    let fields = ops
        .iter()
        .map(|op| field_of(*op, theta))
        .collect::<Result<Vec<_>>>()?;
    let mut out = theta.clone();
    // suffix[v] = Σ_{w ≥ v} V_{i_w}(θ)
    let mut suffix = ParamVector::zeros(theta.dim());
    let mut second = ParamVector::zeros(theta.dim());
    for u in (0..ops.len()).rev() {
        if u + 1 < ops.len() {
            suffix.axpy(1.0, &fields[u + 1]);
            let ju = jacobian_of(ops[u], theta)?;
            second.axpy(1.0, &ParamVector::mat_mul(&ju, &suffix));
        }
        out.axpy(h, &fields[u]);
    }
    out.axpy(h * h, &second);
    Ok(out)
}

/// Backward minus forward composition of `T₁..Tₙ` at `θ`, together with the
/// bracket prediction `h²Σ_{i<j}[V_i, V_j](θ)`.
pub fn forward_backward_difference<S>(seq: &S, theta: &ParamVector, n: usize) -> Result<(ParamVector, ParamVector)>
where
    S: OperatorSequence + ?Sized,
{
    if n < 2 {
        return Err(LabError::Config(format!("difference needs n >= 2, got {n}")));
    }
    let ops: Vec<_> = (1..=n).map(|i| seq.operator(i)).collect();
    let refs: Vec<&dyn UpdateOperator> = ops.iter().map(|o| o.as_ref()).collect();
    let h = common_rate(&refs)?;

    let mut fwd = theta.clone();
    for op in &refs {
        fwd = op.apply(&fwd);
    }
    let mut bwd = theta.clone();
    for op in refs.iter().rev() {
        bwd = op.apply(&bwd);
    }

    let fields = refs.iter().map(|op| field_of(*op, theta)).collect::<Result<Vec<_>>>()?;
    let jacs = refs.iter().map(|op| jacobian_of(*op, theta)).collect::<Result<Vec<_>>>()?;
    let mut pred = ParamVector::zeros(theta.dim());
    for i in 0..n {
        for j in (i + 1)..n {
            pred.axpy(1.0, &ParamVector::mat_mul(&jacs[i], &fields[j]));
            pred.axpy(-1.0, &ParamVector::mat_mul(&jacs[j], &fields[i]));
        }
    }
    Ok((bwd.sub(&fwd), pred.scale(h * h)))
}

fn forward_terminal<S>(seq: &S, theta0: &ParamVector, n: usize) -> Result<ParamVector>
where
    S: OperatorSequence + ?Sized,
{
    let mut x = theta0.clone();
    for m in 1..=n {
        x = seq.apply_at(m, &x);
        if !x.is_finite() {
            return Err(LabError::Divergence { step: m });
        }
    }
    Ok(x)
}

/// `θₙ + h²Σ_{1≤i<j≤n}[∇L_i, ∇L_j](θ₀)` with the double sum evaluated pair
/// by pair from model gradients and Hessians.
pub fn approx_backward_direct(seq: &SgdSequence, theta0: &ParamVector, n: usize) -> Result<ParamVector> {
    let h = seq.learning_rate();
    let grads: Vec<ParamVector> = (1..=n).map(|i| seq.gradient_at(i, theta0)).collect();
    let hess = (1..=n)
        .map(|i| {
            seq.hessian_at(i, theta0).ok_or(LabError::Capability {
                index: i,
                what: "Hessian",
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corr = ParamVector::zeros(theta0.dim());
    for i in 0..n {
        for j in (i + 1)..n {
            corr.axpy(1.0, &ParamVector::mat_mul(&hess[i], &grads[j]));
            corr.axpy(-1.0, &ParamVector::mat_mul(&hess[j], &grads[i]));
        }
    }
    let mut out = forward_terminal(seq, theta0, n)?;
    out.axpy(h * h, &corr);
    Ok(out)
}

/// Running sums for the recursive approximate backward iterate.
///
/// After `step = n`: `g = Σ_{i<n} ∇L_i(θ₀)`, `hessian_sum = Σ_{i<n} ∇²L_i(θ₀)`
/// and `correction = Σ_{i<j≤n} [∇L_i, ∇L_j](θ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxBackwardState {
    pub g: ParamVector,
    pub hessian_sum: DMatrix<f64>,
    pub correction: ParamVector,
    pub base_point: ParamVector,
    pub step: usize,
    last: Option<(ParamVector, DMatrix<f64>)>,
}

impl ApproxBackwardState {
    pub fn new(base_point: ParamVector) -> Self {
        let d = base_point.dim();
        Self {
            g: ParamVector::zeros(d),
            hessian_sum: DMatrix::zeros(d, d),
            correction: ParamVector::zeros(d),
            base_point,
            step: 0,
            last: None,
        }
    }

    /// Advances to the next step given `∇L_n(θ₀)` and `∇²L_n(θ₀)`.
    pub fn push(&mut self, grad: ParamVector, hess: DMatrix<f64>) {
        if let Some((g_prev, h_prev)) = self.last.take() {
            self.g.axpy(1.0, &g_prev);
            self.hessian_sum += h_prev;
        }
        self.correction.axpy(1.0, &ParamVector::mat_mul(&self.hessian_sum, &grad));
        self.correction.axpy(-1.0, &ParamVector::mat_mul(&hess, &self.g));
        self.last = Some((grad, hess));
        self.step += 1;
    }

    /// Advances using the operator's field and Jacobian at the base point,
    /// reading `∇L = −V` and `∇²L = −V′`.
    pub fn push_operator(&mut self, op: &dyn UpdateOperator) -> Result<()> {
        let v = field_of(op, &self.base_point)?;
        let j = jacobian_of(op, &self.base_point)?;
        self.push(v.scale(-1.0), -j);
        Ok(())
    }

    /// `θₙ + h²Cₙ` for the supplied forward iterate.
    pub fn corrected(&self, forward: &ParamVector, h: f64) -> ParamVector {
        forward.add_scaled(h * h, &self.correction)
    }
}

/// Forward trajectory plus the running bracket correction, returning
/// `θ̃ₙ = θₙ + h²Cₙ` and the final state. Works for any sequence whose
/// operators expose a field Jacobian.
pub fn approx_backward_recursive<S>(seq: &S, theta0: &ParamVector, n: usize) -> Result<(ParamVector, ApproxBackwardState)>
where
    S: OperatorSequence + ?Sized,
{
    let mut out = theta0.clone();
    let state = approx_backward_observe(seq, theta0, n, &mut |_, approx, _| {
        out = approx.clone();
        Ok(())
    })?;
    Ok((out, state))
}

/// Runs the recursion, calling `observer(m, θ̃_m, θ_m)` after every step.
pub fn approx_backward_observe<S>(
    seq: &S,
    theta0: &ParamVector,
    n: usize,
    observer: &mut dyn FnMut(usize, &ParamVector, &ParamVector) -> Result<()>,
) -> Result<ApproxBackwardState>
where
    S: OperatorSequence + ?Sized,
{
    let mut state = ApproxBackwardState::new(theta0.clone());
    let mut x = theta0.clone();
    for m in 1..=n {
        let op = seq.operator(m);
        x = op.apply(&x);
        if !x.is_finite() {
            return Err(LabError::Divergence { step: m });
        }
        state.push_operator(op.as_ref())?;
        let approx = state.corrected(&x, op.learning_rate());
        if !approx.is_finite() {
            return Err(LabError::Divergence { step: m });
        }
        observer(m, &approx, &x)?;
    }
    Ok(state)
}

/// Trajectory of approximate backward iterates `θ̃₀..θ̃ₙ`.
pub fn approx_backward_trajectory<S>(seq: &S, theta0: &ParamVector, n: usize) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    let mut traj = Trajectory::new(Mode::ApproxBackward, theta0.clone(), Vec::new(), seq.seed());
    approx_backward_observe(seq, theta0, n, &mut |_, approx, _| {
        traj.push(approx.clone());
        Ok(())
    })?;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub h: f64,
    pub error: f64,
    /// `error(h)/error(h/2)`; absent for the last retained value or when the
    /// next value was discarded.
    pub ratio: Option<f64>,
}

/// `count` values starting at `h0`, each half the previous.
pub fn halving_ladder(h0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| h0 / 2f64.powi(k as i32)).collect()
}

/// Evaluates `build(h) = (approximation, reference)` along a halving ladder
/// and reports errors and successive ratios. Errors at or below
/// [`ORDER_ERROR_FLOOR`] are dropped with a warning.
pub fn order_check<F>(build: F, ladder: &[f64]) -> Result<Vec<OrderRow>>
where
    F: Fn(f64) -> Result<(ParamVector, ParamVector)>,
{
    if ladder.len() < 3 {
        return Err(LabError::Config(format!("ladder needs >= 3 values, got {}", ladder.len())));
    }
    if ladder.iter().any(|h| !(*h > 0.0)) {
        return Err(LabError::Config("ladder values must be > 0".into()));
    }
    if let Some(w) = ladder.windows(2).find(|w| (w[1] - w[0] / 2.0).abs() > 1e-12 * w[0]) {
        return Err(LabError::Config(format!("ladder must halve: {} then {}", w[0], w[1])));
    }
    let mut errors: Vec<Option<f64>> = Vec::with_capacity(ladder.len());
    for &h in ladder {
        let (approx, reference) = build(h)?;
        let e = approx.distance(&reference);
        if e <= ORDER_ERROR_FLOOR {
            log::warn!("order check: error {e:e} at h = {h} is at the round-off floor; discarded");
            errors.push(None);
        } else {
            errors.push(Some(e));
        }
    }
    let mut rows = Vec::new();
    for (k, &h) in ladder.iter().enumerate() {
        if let Some(e) = errors[k] {
            let ratio = errors.get(k + 1).copied().flatten().map(|next| e / next);
            rows.push(OrderRow { h, error: e, ratio });
        }
    }
    Ok(rows)
}

/// Writes `h,error,ratio` rows; an absent ratio is an empty field.
pub fn write_order_csv(rows: &[OrderRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "error", "ratio"])?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.h),
            format!("{:.16e}", r.error),
            r.ratio.map_or(String::new(), |x| format!("{x:.16e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}
