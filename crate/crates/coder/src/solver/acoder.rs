//! Accelerated cyclic coordinate dual averaging with gradient extrapolation,
//! in fixed-constant and backtracking line-search variants.
//!
//! One outer iteration combines the momentum point
//! `x_k = (A_{k−1}/A_k)·y_{k−1} + (a_k/A_k)·v_{k−1}`, a full gradient at
//! `x_k` (kept for the next iteration's extrapolation), and one cyclic sweep
//! over blocks `m → 1`. At block `j` the sweep evaluates the block gradient
//! at the hybrid point that takes blocks `≤ j` from `x_k` and blocks `> j`
//! from the already-updated `y_k`, extrapolates it with the previous cycle's
//! information, folds it into the dual average `z`, and proxes.

use crate::problem::CompositeProblem;

use super::{
    acoder_step_size, all_finite, Flow, Recorder, RunControl, RunResult, SchedulePoint,
    SolverError,
};

const LINE_SEARCH_CAP_LOG2: i32 = 60;

struct AcoderState {
    x0: Vec<f64>,
    /// Momentum point of the current iteration.
    x: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
    /// Dual average of extrapolated block gradients.
    z: Vec<f64>,
    /// Previous cycle's hybrid block gradients.
    p: Vec<f64>,
    /// `∇f(x_{k−1})`.
    g_prev: Vec<f64>,
    a_prev: f64,
    big_a_prev: f64,
}

struct Scratch {
    g_cur: Vec<f64>,
    p_new: Vec<f64>,
    z_new: Vec<f64>,
    v_new: Vec<f64>,
    y_new: Vec<f64>,
    block: Vec<f64>,
}

struct SweepOutcome {
    a: f64,
    big_a: f64,
    correction_inf: f64,
}

/// Runs one full iteration (momentum point, gradient, cyclic sweep) for a
/// candidate constant `l`, writing all updates into `scratch`. Commits
/// nothing; on return the oracle's sweep residual sits at the candidate
/// `y_k`, so `oracle.sweep_value()` is the candidate `f(y_k)`.
fn probe_iteration(
    problem: &mut CompositeProblem,
    state: &mut AcoderState,
    scratch: &mut Scratch,
    k: usize,
    gamma: f64,
    l: f64,
) -> SweepOutcome {
    let a = acoder_step_size(state.big_a_prev, gamma, l);
    let big_a = state.big_a_prev + a;
    let tail_w = state.big_a_prev / big_a;
    let head_w = a / big_a;
    for i in 0..state.x.len() {
        state.x[i] = tail_w * state.y[i] + head_w * state.v[i];
    }
    problem
        .oracle
        .full_gradient_with_sweep(&state.x, &mut scratch.g_cur);
    let ratio = if k == 1 { 0.0 } else { state.a_prev / a };

    let m = problem.partition().num_blocks();
    let mut correction_inf = 0.0f64;
    for j in (0..m).rev() {
        let range = problem.partition().range(j);
        scratch.block.resize(range.len(), 0.0);
        problem.oracle.sweep_block_gradient(j, &mut scratch.block);
        for (offset, c) in range.clone().enumerate() {
            let corr = ratio * (state.g_prev[c] - state.p[c]);
            correction_inf = correction_inf.max(corr.abs());
            scratch.p_new[c] = scratch.block[offset];
            let q = scratch.block[offset] + corr;
            scratch.z_new[c] = state.z[c] + a * q;
            scratch.block[offset] = state.x0[c] - scratch.z_new[c];
        }
        let (v_new_blk, y_new_blk) = (
            &mut scratch.v_new[range.clone()],
            &mut scratch.y_new[range.clone()],
        );
        problem
            .reg
            .block_prox(j, &scratch.block[..range.len()], big_a, v_new_blk)
            .expect("prox weight A_k is positive");
        for (offset, c) in range.clone().enumerate() {
            y_new_blk[offset] = tail_w * state.y[c] + head_w * v_new_blk[offset];
        }
        problem.oracle.sweep_flip_block(j, &scratch.y_new[range]);
    }
    SweepOutcome { a, big_a, correction_inf }
}

fn commit(state: &mut AcoderState, scratch: &mut Scratch, outcome: &SweepOutcome) {
    std::mem::swap(&mut state.y, &mut scratch.y_new);
    std::mem::swap(&mut state.v, &mut scratch.v_new);
    std::mem::swap(&mut state.z, &mut scratch.z_new);
    std::mem::swap(&mut state.p, &mut scratch.p_new);
    std::mem::swap(&mut state.g_prev, &mut scratch.g_cur);
    state.a_prev = outcome.a;
    state.big_a_prev = outcome.big_a;
}

fn init_state(problem: &mut CompositeProblem, x0: &[f64]) -> AcoderState {
    let d = problem.dim();
    let mut state = AcoderState {
        x0: x0.to_vec(),
        x: vec![0.0; d],
        y: x0.to_vec(),
        v: x0.to_vec(),
        z: vec![0.0; d],
        p: vec![0.0; d],
        g_prev: vec![0.0; d],
        a_prev: 0.0,
        big_a_prev: 0.0,
    };
    // p_0 = ∇f(x_0); also serves as ∇f(x_{k−1}) for k = 1 (where the
    // extrapolation ratio is exactly zero by the a_0 = 0 convention)
    let mut g0 = vec![0.0; d];
    problem.oracle.full_gradient(x0, &mut g0);
    state.p.copy_from_slice(&g0);
    state.g_prev = g0;
    state
}

enum LMode {
    Fixed(f64),
    Adaptive { l0: f64 },
}

fn run_impl(
    problem: &mut CompositeProblem,
    mode: LMode,
    max_iter: usize,
    x0: &[f64],
    mut control: RunControl,
) -> Result<RunResult, SolverError> {
    let l_init = match mode {
        LMode::Fixed(l) | LMode::Adaptive { l0: l } => l,
    };
    if !(l_init > 0.0) || !l_init.is_finite() {
        return Err(SolverError::InvalidParameter(format!(
            "smoothness constant must be positive and finite, got {l_init}"
        )));
    }
    let d = problem.dim();
    assert_eq!(x0.len(), d, "dimension mismatch");
    let gamma = problem.gamma();
    let mut recorder = Recorder::new(&mut control);
    let mut result = RunResult::new(d);
    let mut state = init_state(problem, x0);
    let mut scratch = Scratch {
        g_cur: vec![0.0; d],
        p_new: vec![0.0; d],
        z_new: vec![0.0; d],
        v_new: vec![0.0; d],
        y_new: vec![0.0; d],
        block: Vec::new(),
    };
    let mut l_prev = l_init;

    for k in 1..=max_iter {
        let (outcome, accepted_l) = match mode {
            LMode::Fixed(l) => (probe_iteration(problem, &mut state, &mut scratch, k, gamma, l), l),
            LMode::Adaptive { l0 } => {
                let mut l_k = l_prev / 2.0;
                loop {
                    l_k *= 2.0;
                    if l_k > l0 * (2.0f64).powi(LINE_SEARCH_CAP_LOG2) {
                        return Err(SolverError::LineSearchDiverged { l0, l: l_k });
                    }
                    let outcome = probe_iteration(problem, &mut state, &mut scratch, k, gamma, l_k);
                    // f(y_k) from the sweep's own residual; ∇f(x_k) is in scratch
                    let f_y = problem.oracle.sweep_value();
                    let f_x = problem.oracle.value_probe(&state.x);
                    let mut inner = 0.0;
                    let mut dist_sq = 0.0;
                    for i in 0..d {
                        let diff = scratch.y_new[i] - state.x[i];
                        inner += scratch.g_cur[i] * diff;
                        dist_sq += diff * diff;
                    }
                    if f_y <= f_x + inner + 0.5 * l_k * dist_sq {
                        break (outcome, l_k);
                    }
                }
            }
        };
        commit(&mut state, &mut scratch, &outcome);
        l_prev = accepted_l;
        result.max_extrapolation_correction = result
            .max_extrapolation_correction
            .max(outcome.correction_inf);
        result.schedule.push(SchedulePoint {
            a: outcome.a,
            big_a: outcome.big_a,
            l: accepted_l,
        });
        result.iterations = k;
        if !all_finite(&state.y) || !all_finite(&state.v) {
            return Err(SolverError::NonFinite { what: "accelerated cyclic solver", iteration: k });
        }
        if recorder.capture_iterates() {
            result.iterates.push(super::IteratePair {
                y: state.y.clone(),
                v: state.v.clone(),
            });
        }
        let units = problem.oracle.cost_units();
        if recorder.due(k) || k == max_iter || recorder.over_budget(units) {
            let objective = problem.objective_probe(&state.y);
            if let Flow::Stop { converged } = recorder.record(&mut result, k, units, objective) {
                result.converged = converged;
                break;
            }
        }
    }
    result.y = state.y;
    result.v = state.v;
    Ok(result)
}

/// Accelerated cyclic run with a fixed smoothness constant `l`, started at
/// the origin.
pub fn run_acoder(
    problem: &mut CompositeProblem,
    l: f64,
    max_iter: usize,
    control: RunControl,
) -> Result<RunResult, SolverError> {
    let x0 = vec![0.0; problem.dim()];
    run_acoder_from(problem, l, max_iter, &x0, control)
}

/// Accelerated cyclic run from an explicit initial point.
pub fn run_acoder_from(
    problem: &mut CompositeProblem,
    l: f64,
    max_iter: usize,
    x0: &[f64],
    control: RunControl,
) -> Result<RunResult, SolverError> {
    run_impl(problem, LMode::Fixed(l), max_iter, x0, control)
}

/// Backtracking variant: per iteration the constant starts at half the
/// previously accepted value and doubles until the quadratic upper bound
/// holds between `x_k` and `y_k`. Failed probes leave no side effects, so
/// accepted iterations coincide exactly with the fixed-constant algorithm run
/// at the accepted constant.
pub fn run_ada_acoder(
    problem: &mut CompositeProblem,
    l0: f64,
    max_iter: usize,
    control: RunControl,
) -> Result<RunResult, SolverError> {
    let x0 = vec![0.0; problem.dim()];
    run_impl(problem, LMode::Adaptive { l0 }, max_iter, &x0, control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockPartition;
    use crate::data::Dataset;
    use crate::oracle::{Loss, SmoothOracle};
    use crate::regularizer::{BlockPenalty, SeparableRegularizer};
    use crate::sparse::SparseMatrix;
    use std::sync::Arc;

    /// f(x) = ½x² as squared loss with a single sample a = 1, b = 0.
    fn scalar_half_square(reg: BlockPenalty) -> CompositeProblem {
        let matrix = SparseMatrix::from_rows(1, &[vec![(0usize, 1.0)]]).unwrap();
        let ds = Dataset::new(matrix, vec![0.0]).unwrap();
        let partition = BlockPartition::single(1).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, reg).unwrap();
        CompositeProblem::new(oracle, reg).unwrap()
    }

    #[test]
    fn hand_traced_first_iteration() {
        // x0 = 1, L = 1, γ = 0: a1 = A1 = 0.4, p1 = q1 = 1, z1 = 0.4,
        // v1 = 0.6, y1 = 0.6
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        let out = run_acoder_from(&mut problem, 1.0, 1, &[1.0], RunControl::default()).unwrap();
        assert!((out.schedule[0].a - 0.4).abs() < 1e-15);
        assert!((out.schedule[0].big_a - 0.4).abs() < 1e-15);
        assert!((out.v[0] - 0.6).abs() < 1e-15);
        assert!((out.y[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_at_optimum() {
        // x0 already minimizes f with g = 0: every iterate stays put
        let matrix = SparseMatrix::from_rows(2, &[vec![(0usize, 1.0), (1usize, 2.0)]]).unwrap();
        let ds = Dataset::new(matrix, vec![3.0]).unwrap();
        let partition = BlockPartition::coordinates(2).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, BlockPenalty::Zero).unwrap();
        let mut problem = CompositeProblem::new(oracle, reg).unwrap();
        // ⟨a, x0⟩ = 3 = b at x0 = (1, 1): gradient is zero there
        let x0 = [1.0, 1.0];
        let out = run_acoder_from(&mut problem, 1.0, 25, &x0, RunControl::default()).unwrap();
        for (yi, x0i) in out.y.iter().zip(&x0) {
            assert!((yi - x0i).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_block_extrapolation_correction_is_zero() {
        let mut problem = scalar_half_square(BlockPenalty::L1(0.05));
        let out = run_acoder_from(&mut problem, 1.0, 50, &[2.0], RunControl::default()).unwrap();
        assert!(out.max_extrapolation_correction <= 1e-14);
    }

    #[test]
    fn converges_on_scalar_lasso() {
        // min ½(x−2)² + |x|: optimum at x = 1
        let matrix = SparseMatrix::from_rows(1, &[vec![(0usize, 1.0)]]).unwrap();
        let ds = Dataset::new(matrix, vec![2.0]).unwrap();
        let partition = BlockPartition::single(1).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, BlockPenalty::L1(1.0)).unwrap();
        let mut problem = CompositeProblem::new(oracle, reg).unwrap();
        let out = run_acoder(&mut problem, 1.0, 400, RunControl::default()).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-3, "y = {}", out.y[0]);
    }

    #[test]
    fn quadratic_growth_of_accumulated_weights() {
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        let l = 1.0;
        let out = run_acoder_from(&mut problem, l, 100, &[1.0], RunControl::default()).unwrap();
        for (k, pt) in out.schedule.iter().enumerate() {
            let k = (k + 1) as f64;
            assert!(pt.big_a >= k * k / (10.0 * l) - 1e-9);
        }
    }

    #[test]
    fn adaptive_matches_fixed_when_l0_is_large_enough() {
        let make = || scalar_half_square(BlockPenalty::Ridge(0.1));
        let mut p1 = make();
        let mut p2 = make();
        let fixed = run_acoder_from(&mut p1, 2.0, 40, &[1.0], RunControl::default()).unwrap();
        let mut control = RunControl::default();
        control.record_every = 1;
        // adaptive from the same L0: the first probe is L0 and the quadratic
        // bound holds (true constant is 1), so trajectories are identical
        let ada = run_impl(&mut p2, LMode::Adaptive { l0: 2.0 }, 40, &[1.0], control).unwrap();
        assert_eq!(fixed.y, ada.y);
        assert_eq!(fixed.v, ada.v);
        for (a, b) in fixed.schedule.iter().zip(&ada.schedule) {
            assert_eq!(a.a, b.a);
            assert_eq!(a.l, b.l);
        }
    }

    #[test]
    fn adaptive_from_tiny_l0_stays_below_twice_true_constant() {
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        let l_true = 1.0;
        let out = run_ada_acoder(&mut problem, l_true / 1024.0, 60, RunControl::default())
            .unwrap();
        for pt in &out.schedule {
            assert!(pt.l <= 2.0 * l_true + 1e-12, "accepted {}", pt.l);
        }
    }

    #[test]
    fn rejects_nonpositive_constant() {
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        assert!(run_acoder(&mut problem, 0.0, 5, RunControl::default()).is_err());
        assert!(run_acoder(&mut problem, -1.0, 5, RunControl::default()).is_err());
    }

    #[test]
    fn unit_budget_stops_run() {
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        let mut control = RunControl::default();
        control.unit_budget = Some(6.0);
        let out = run_acoder_from(&mut problem, 1.0, 1000, &[1.0], control).unwrap();
        // ~2 units per iteration plus the init gradient
        assert!(out.iterations < 10, "ran {} iterations", out.iterations);
        assert!(!out.converged);
    }

    #[test]
    fn gap_target_reports_convergence() {
        let mut problem = scalar_half_square(BlockPenalty::Zero);
        let mut control = RunControl::default();
        control.reference_objective = Some(0.0);
        control.gap_target = Some(1e-8);
        let out = run_acoder_from(&mut problem, 1.0, 10_000, &[1.0], control).unwrap();
        assert!(out.converged);
        let last = out.trace.last().unwrap();
        assert!(last.gap.unwrap() <= 1e-8);
    }

    #[test]
    fn trace_counters_are_strictly_increasing() {
        let mut problem = scalar_half_square(BlockPenalty::L1(0.1));
        let out = run_acoder_from(&mut problem, 1.0, 30, &[1.0], RunControl::default()).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].iter > w[0].iter);
            assert!(w[1].grad_units > w[0].grad_units);
            assert!(w[1].wall_clock_s >= w[0].wall_clock_s);
        }
    }
}
