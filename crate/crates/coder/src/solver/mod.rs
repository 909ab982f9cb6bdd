//! Solver runs, trace capture, and the shared step-size schedule.

mod acoder;
mod baseline;
mod vr;

pub use acoder::{run_acoder, run_acoder_from, run_ada_acoder};
pub use baseline::{rcdm_block_constants, run_proxgrad, run_proxgrad_from, run_rcdm};
pub use vr::{run_ada_vr_acoder, run_vr_acoder, run_vr_acoder_with};

use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("nonfinite iterate in {what} at iteration {iteration} (step constant too small or data pathology)")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line search exceeded 2^60·L0 (started at {l0}, reached {l})")]
    LineSearchDiverged { l0: f64, l: f64 },
}

/// One benchmark sample. `gap` is present when a reference objective is
/// supplied through [`RunControl`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub grad_units: f64,
    pub wall_clock_s: f64,
    pub objective: f64,
    pub gap: Option<f64>,
}

/// Accepted step-size pair (and the smoothness constant in effect) for one
/// outer iteration or epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub a: f64,
    pub big_a: f64,
    pub l: f64,
}

/// Snapshot of the pair of output iterates after one outer iteration/epoch.
#[derive(Debug, Clone)]
pub struct IteratePair {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug)]
pub struct RunResult {
    /// Primary output iterate.
    pub y: Vec<f64>,
    /// Dual-averaging iterate.
    pub v: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    /// Per-iteration iterates, captured when requested.
    pub iterates: Vec<IteratePair>,
    /// Outer iterations (or epochs) completed.
    pub iterations: usize,
    /// True when a requested gap target was reached before the budget.
    pub converged: bool,
    /// Certificate values: the accepted (a, A, L) per iteration/epoch.
    pub schedule: Vec<SchedulePoint>,
    /// Largest observed gradient-extrapolation correction (∞-norm).
    pub max_extrapolation_correction: f64,
    /// Largest observed anchor-correction of the variance-reduced estimator
    /// (∞-norm); exactly zero for single-component sums.
    pub max_svrg_correction: f64,
}

impl RunResult {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            y: vec![0.0; dim],
            v: vec![0.0; dim],
            trace: Vec::new(),
            iterates: Vec::new(),
            iterations: 0,
            converged: false,
            schedule: Vec::new(),
            max_extrapolation_correction: 0.0,
            max_svrg_correction: 0.0,
        }
    }
}

/// Run-control knobs shared by all solvers. Budgets are checked at record
/// points; the trace callback must not mutate solver state.
pub struct RunControl<'a> {
    /// Known optimal objective; enables the trace's gap column.
    pub reference_objective: Option<f64>,
    /// Stop once the recorded gap falls to this level (needs a reference).
    pub gap_target: Option<f64>,
    /// Stop once the oracle has consumed this many full-gradient units.
    pub unit_budget: Option<f64>,
    /// Stop once this much wall clock has elapsed.
    pub wall_clock_cap: Option<Duration>,
    /// Record (and check budgets) every this many outer iterations.
    pub record_every: usize,
    /// Keep every iteration's (y, v) pair in the result.
    pub capture_iterates: bool,
    pub callback: Option<&'a mut dyn FnMut(&TraceRecord)>,
}

impl Default for RunControl<'_> {
    fn default() -> Self {
        Self {
            reference_objective: None,
            gap_target: None,
            unit_budget: None,
            wall_clock_cap: None,
            record_every: 1,
            capture_iterates: false,
            callback: None,
        }
    }
}

/// Largest `a` with `a²/(A_prev + a) = 2(1 + A_prev·γ)/(5L)` — the positive
/// root of the accelerated schedule's quadratic.
pub fn acoder_step_size(big_a_prev: f64, gamma: f64, l: f64) -> f64 {
    debug_assert!(l > 0.0);
    let c = 2.0 * (1.0 + big_a_prev * gamma) / (5.0 * l);
    let a = 0.5 * (c + (c * c + 4.0 * c * big_a_prev).sqrt());
    // on overflow the solver's nonfinite-iterate check reports the abort
    debug_assert!(
        !a.is_finite() || (a * a - c * (big_a_prev + a)).abs() <= 1e-12 * (a * a).max(1.0),
        "schedule root drifted"
    );
    a
}

/// Epoch step for the variance-reduced schedule (epochs ≥ 2):
/// `a = √(K·A_prev·(1 + A_prev·γ)/(8L))`.
pub fn vr_step_size(big_a_prev: f64, gamma: f64, l: f64, k_inner: usize) -> f64 {
    debug_assert!(l > 0.0 && big_a_prev > 0.0);
    (k_inner as f64 * big_a_prev * (1.0 + big_a_prev * gamma) / (8.0 * l)).sqrt()
}

/// Whether the run should stop, and with what convergence verdict.
pub(crate) enum Flow {
    Continue,
    Stop { converged: bool },
}

pub(crate) struct Recorder<'a, 'b> {
    control: &'a mut RunControl<'b>,
    start: Instant,
}

impl<'a, 'b> Recorder<'a, 'b> {
    pub fn new(control: &'a mut RunControl<'b>) -> Self {
        Self { control, start: Instant::now() }
    }

    pub fn due(&self, iter: usize) -> bool {
        iter % self.control.record_every.max(1) == 0
    }

    /// Cheap per-iteration stop check; unlike gap targets this must not wait
    /// for the next record point.
    pub fn over_budget(&self, units: f64) -> bool {
        self.control.unit_budget.is_some_and(|b| units >= b)
            || self
                .control
                .wall_clock_cap
                .is_some_and(|cap| self.start.elapsed() >= cap)
    }

    pub fn capture_iterates(&self) -> bool {
        self.control.capture_iterates
    }

    pub fn record(
        &mut self,
        result: &mut RunResult,
        iter: usize,
        grad_units: f64,
        objective: f64,
    ) -> Flow {
        let gap = self.control.reference_objective.map(|f_star| objective - f_star);
        let record = TraceRecord {
            iter,
            grad_units,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
            objective,
            gap,
        };
        if let Some(cb) = self.control.callback.as_mut() {
            cb(&record);
        }
        result.trace.push(record);
        if let (Some(target), Some(g)) = (self.control.gap_target, gap) {
            if g <= target {
                return Flow::Stop { converged: true };
            }
        }
        if let Some(budget) = self.control.unit_budget {
            if grad_units >= budget {
                return Flow::Stop { converged: false };
            }
        }
        if let Some(cap) = self.control.wall_clock_cap {
            if self.start.elapsed() >= cap {
                return Flow::Stop { converged: false };
            }
        }
        Flow::Continue
    }
}

pub(crate) fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}
