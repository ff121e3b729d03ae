//! Trajectory engines: forward composition, naive backward replay,
//! intermittent backward and backward-after-switch.
//!
//! All four modes are instances of one replay plan. Up to the switch step `s`
//! the iterate advances forward, `θ_m = T_m(θ_{m-1})`. Past it, the iterate at
//! step `m` is rebuilt from the current anchor `a < m` as
//! `T_{a+1} T_{a+2} ⋯ T_m(θ_a)`, applying `T_m` first. Anchors are `s` and
//! every reset step. Operators are regenerated from the sequence on each
//! replay, so memory stays `O(d)` regardless of the step count.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::operator::OperatorSequence;
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    Backward,
    IntermittentBackward,
    BackwardAfterSwitch,
    ApproxBackward,
    OrderAverage,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Backward => "backward",
            Mode::IntermittentBackward => "intermittent-backward",
            Mode::BackwardAfterSwitch => "backward-after-switch",
            Mode::ApproxBackward => "approx-backward",
            Mode::OrderAverage => "order-average",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub iterate: ParamVector,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    /// `‖θ_n − θ_{n−1}‖`, zero at step 0.
    pub step_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub records: Vec<TrajectoryRecord>,
    /// Reset or switch steps; empty for plain forward and backward runs.
    pub anchor_steps: Vec<usize>,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(mode: Mode, start: ParamVector, anchor_steps: Vec<usize>, seed: u64) -> Self {
        Self {
            mode,
            records: vec![TrajectoryRecord {
                step: 0,
                iterate: start,
                train_loss: None,
                test_loss: None,
                step_displacement: 0.0,
            }],
            anchor_steps,
            seed,
        }
    }

    /// Appends the next iterate, deriving its step displacement.
    pub fn push(&mut self, iterate: ParamVector) {
        let last = self.records.last().expect("trajectory always has a start record");
        let step_displacement = iterate.distance(&last.iterate);
        let step = last.step + 1;
        self.records.push(TrajectoryRecord {
            step,
            iterate,
            train_loss: None,
            test_loss: None,
            step_displacement,
        });
    }

    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn start(&self) -> &ParamVector {
        &self.records[0].iterate
    }

    pub fn terminal(&self) -> &ParamVector {
        &self.records.last().expect("non-empty").iterate
    }

    pub fn iterate(&self, step: usize) -> &ParamVector {
        &self.records[step].iterate
    }

    /// Fills train/test losses on every `every`-th record (and the last).
    pub fn evaluate_losses<F>(&mut self, every: usize, eval: F)
    where
        F: Fn(&ParamVector) -> (Option<f64>, Option<f64>),
    {
        let every = every.max(1);
        let last = self.records.len() - 1;
        for (i, rec) in self.records.iter_mut().enumerate() {
            if i % every == 0 || i == last {
                let (train, test) = eval(&rec.iterate);
                rec.train_loss = train;
                rec.test_loss = test;
            }
        }
    }
}

/// When each step is computed forward and which anchor each backward step
/// replays from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayPlan {
    /// Steps `1..=switch_step` advance forward.
    pub switch_step: usize,
    /// Strictly increasing reset steps.
    pub resets: Vec<usize>,
}

impl ReplayPlan {
    pub fn forward(n: usize) -> Self {
        Self {
            switch_step: n,
            resets: Vec::new(),
        }
    }

    pub fn backward() -> Self {
        Self {
            switch_step: 0,
            resets: Vec::new(),
        }
    }

    pub fn intermittent(resets: Vec<usize>) -> Self {
        Self {
            switch_step: 0,
            resets,
        }
    }

    pub fn switch_at(s: usize) -> Self {
        Self {
            switch_step: s,
            resets: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.switch_step > n {
            return Err(LabError::Config(format!(
                "switch step {} exceeds step count {n}",
                self.switch_step
            )));
        }
        if self.resets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Config("resets must be strictly increasing".into()));
        }
        if let Some(r) = self.resets.iter().find(|&&r| r == 0 || r > n) {
            return Err(LabError::Config(format!("reset {r} outside [1, {n}]")));
        }
        Ok(())
    }

    fn is_anchor(&self, m: usize) -> bool {
        (m == self.switch_step && m > 0) || self.resets.binary_search(&m).is_ok()
    }

    /// Anchor step for step `m` (largest anchor strictly below `m`).
    pub fn anchor_for(&self, m: usize) -> usize {
        if m <= self.switch_step {
            return 0;
        }
        let below = self.resets.partition_point(|&r| r < m);
        let reset = if below == 0 { 0 } else { self.resets[below - 1] };
        reset.max(self.switch_step)
    }
}

/// What an observer sees at each recorded step.
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: usize,
    pub iterate: &'a ParamVector,
    pub displacement: f64,
    pub anchor_step: usize,
    pub anchor: &'a ParamVector,
}

/// Runs a replay plan for `n` steps, reporting every `record_every`-th step
/// (and step `n`) to `observer`. Unreported backward steps are skipped
/// entirely unless the next step is reported or they serve as an anchor.
/// Returns the terminal iterate.
pub fn drive<S>(
    seq: &S,
    start: &ParamVector,
    n: usize,
    plan: &ReplayPlan,
    record_every: usize,
    observer: &mut dyn FnMut(&StepView<'_>) -> Result<()>,
) -> Result<ParamVector>
where
    S: OperatorSequence + ?Sized,
{
    plan.validate(n)?;
    if start.dim() != seq.dim() {
        return Err(LabError::Config(format!(
            "start has dimension {} but operators act on dimension {}",
            start.dim(),
            seq.dim()
        )));
    }
    if !start.is_finite() {
        return Err(LabError::Divergence { step: 0 });
    }
    let every = record_every.max(1);
    let recorded = |m: usize| m % every == 0 || m == n;

    let mut prev: Option<ParamVector> = Some(start.clone());
    let mut anchor_step = 0usize;
    let mut anchor = start.clone();

    for m in 1..=n {
        let forward = m <= plan.switch_step;
        let needed = forward
            || recorded(m)
            || (m < n && recorded(m + 1))
            || plan.is_anchor(m);
        if !needed {
            prev = None;
            continue;
        }

        let current = if forward {
            let p = prev.as_ref().expect("forward steps are always computed");
            seq.apply_at(m, p)
        } else {
            debug_assert_eq!(plan.anchor_for(m), anchor_step);
            let mut x = anchor.clone();
            for i in ((anchor_step + 1)..=m).rev() {
                x = seq.apply_at(i, &x);
            }
            x
        };
        if current.dim() != start.dim() {
            return Err(LabError::Config(format!(
                "operator {m} returned dimension {} (expected {})",
                current.dim(),
                start.dim()
            )));
        }
        if !current.is_finite() {
            return Err(LabError::Divergence { step: m });
        }

        if recorded(m) {
            let p = prev
                .as_ref()
                .expect("the step before a recorded step is computed");
            let (a_step, a_point) = if forward {
                (0, start)
            } else {
                (anchor_step, &anchor)
            };
            observer(&StepView {
                step: m,
                iterate: &current,
                displacement: current.distance(p),
                anchor_step: a_step,
                anchor: a_point,
            })?;
        }

        if plan.is_anchor(m) {
            anchor_step = m;
            anchor = current.clone();
        }
        prev = Some(current);
    }

    Ok(prev.unwrap_or_else(|| start.clone()))
}

fn run_plan<S>(
    seq: &S,
    start: &ParamVector,
    n: usize,
    plan: ReplayPlan,
    mode: Mode,
    anchors: Vec<usize>,
) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    let mut traj = Trajectory::new(mode, start.clone(), anchors, seq.seed());
    drive(seq, start, n, &plan, 1, &mut |view| {
        traj.push(view.iterate.clone());
        Ok(())
    })?;
    Ok(traj)
}

/// `θ_m = T_m T_{m−1} ⋯ T_1(start)`; exactly `n` operator applications.
pub fn apply_forward<S>(seq: &S, start: &ParamVector, n: usize) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    run_plan(seq, start, n, ReplayPlan::forward(n), Mode::Forward, Vec::new())
}

/// `θ_m = T_1 T_2 ⋯ T_m(start)`, each step replayed from the start;
/// exactly `n(n+1)/2` operator applications.
pub fn apply_backward_naive<S>(seq: &S, start: &ParamVector, n: usize) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    run_plan(seq, start, n, ReplayPlan::backward(), Mode::Backward, Vec::new())
}

/// Backward replay whose anchor is moved to the trajectory's own iterate at
/// each reset step. A reset at `r` re-anchors steps `> r`.
pub fn apply_intermittent_backward<S>(
    seq: &S,
    start: &ParamVector,
    n: usize,
    resets: &[usize],
) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    run_plan(
        seq,
        start,
        n,
        ReplayPlan::intermittent(resets.to_vec()),
        Mode::IntermittentBackward,
        resets.to_vec(),
    )
}

/// Forward for steps `1..=s`, then backward replay anchored at `θ_s`.
pub fn apply_backward_after<S>(
    seq: &S,
    start: &ParamVector,
    n: usize,
    switch_step: usize,
) -> Result<Trajectory>
where
    S: OperatorSequence + ?Sized,
{
    run_plan(
        seq,
        start,
        n,
        ReplayPlan::switch_at(switch_step),
        Mode::BackwardAfterSwitch,
        vec![switch_step],
    )
}

/// `‖θ_m − θ_{m−1}‖` for `m = 1..=n`.
pub fn step_displacement_series(traj: &Trajectory) -> Vec<f64> {
    traj.records[1..].iter().map(|r| r.step_displacement).collect()
}
