//! Variance-reduced accelerated cyclic solver for finite sums, with an
//! adaptive per-epoch line-search variant.
//!
//! Epochs anchor an SVRG-style estimator at the running average `ỹ_{s−1}`:
//! each inner step sweeps blocks `m → 1`, sampling one component per block
//! and combining the anchored estimator with the same-component gradient
//! extrapolation before the dual-averaging prox. The first epoch is a single
//! prox step against the full gradient at the start point; by default its
//! dual average is seeded as `z = K·a₁·∇f(x₀)` so that every later prox of
//! `x₀ − z/K` continues the same estimate sequence (the literal seeding
//! `z = ∇f(x₀)` is available behind a flag for comparison).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::CompositeProblem;

use super::{
    all_finite, vr_step_size, Flow, Recorder, RunControl, RunResult, SchedulePoint, SolverError,
};

const LINE_SEARCH_CAP_LOG2: i32 = 60;

#[derive(Clone)]
struct VrState {
    x0: Vec<f64>,
    /// Anchor `ỹ_{s−1}`.
    ytilde: Vec<f64>,
    /// Full gradient at the anchor.
    mu: Vec<f64>,
    v: Vec<f64>,
    z: Vec<f64>,
    /// `x_{s,k}` (and, across boundaries, the previous epoch's final x).
    x_work: Vec<f64>,
    /// `y_{s,k}`, updated block-wise within a sweep.
    y_work: Vec<f64>,
    /// `x_{s,k−1}`.
    x_last: Vec<f64>,
    /// `y_{s,k−1}`.
    y_last: Vec<f64>,
    a_prev_outer: f64,
    big_a_prev: f64,
    rng: ChaCha8Rng,
}

struct EpochOutcome {
    max_correction: f64,
    /// Line-search verdict when checks were requested; `true` otherwise.
    checks_ok: bool,
}

/// One epoch of `k_inner` inner steps at step weight `a_s`. When
/// `check_l = Some(L)`, also verifies the two per-step quadratic bounds used
/// by the adaptive variant and reports the verdict (the caller restores state
/// on failure).
fn run_epoch(
    problem: &mut CompositeProblem,
    state: &mut VrState,
    k_inner: usize,
    a_s: f64,
    check_l: Option<f64>,
) -> EpochOutcome {
    let d = problem.dim();
    let m = problem.partition().num_blocks();
    let n = problem.oracle.n_samples();
    let big_a_prev = state.big_a_prev;
    let big_a = big_a_prev + a_s;
    let tail_w = big_a_prev / big_a;
    let head_w = a_s / big_a;
    let k_f = k_inner as f64;
    let mut ytilde_acc = vec![0.0; d];
    let mut sum_v = vec![0.0; d];
    let mut q_blk = Vec::new();
    let mut prox_in = Vec::new();
    let mut prox_out = Vec::new();
    let mut max_correction = 0.0f64;
    let mut checks_ok = true;
    let mut g_x = vec![0.0; d];
    let mut x_margins = Vec::new();

    for k in 1..=k_inner {
        state.x_last.copy_from_slice(&state.x_work);
        for i in 0..d {
            state.x_work[i] = tail_w * state.ytilde[i] + head_w * state.v[i];
        }
        let ratio = if k == 1 { state.a_prev_outer / a_s } else { 1.0 };
        for j in (0..m).rev() {
            let t = state.rng.gen_range(0..n);
            let range = problem.partition().range(j);
            let len = range.len();
            q_blk.resize(len, 0.0);
            prox_in.resize(len, 0.0);
            prox_out.resize(len, 0.0);
            let info = problem.oracle.svrg_block_direction(
                t,
                j,
                &state.x_work,
                &state.y_work,
                &state.x_last,
                &state.y_last,
                ratio,
                &state.mu[range.clone()],
                &mut q_blk,
            );
            max_correction = max_correction.max(info.correction_inf_norm);
            for (offset, c) in range.clone().enumerate() {
                state.z[c] += a_s * q_blk[offset];
                prox_in[offset] = state.x0[c] - state.z[c] / k_f;
            }
            let tau = big_a_prev + a_s * k as f64 / k_f;
            problem
                .reg
                .block_prox(j, &prox_in, tau, &mut prox_out)
                .expect("prox weight is positive");
            for (offset, c) in range.clone().enumerate() {
                state.v[c] = prox_out[offset];
                state.y_work[c] = tail_w * state.ytilde[c] + head_w * prox_out[offset];
            }
        }
        for i in 0..d {
            ytilde_acc[i] += state.y_work[i];
            sum_v[i] += state.v[i];
        }
        if let Some(l) = check_l {
            problem
                .oracle
                .full_gradient_with_margins(&state.x_work, &mut g_x, &mut x_margins);
            let f_x = problem.oracle.value_at_margins(&x_margins);
            let f_y = problem.oracle.full_value(&state.y_work);
            let mut inner = 0.0;
            let mut dist_sq = 0.0;
            for i in 0..d {
                let diff = state.y_work[i] - state.x_work[i];
                inner += g_x[i] * diff;
                dist_sq += diff * diff;
            }
            // float-noise slack: both sides vanish when y or the anchor
            // coincide with x, and rounding must not force a doubling there
            let quad_ok = f_y <= f_x + inner + 0.5 * l * dist_sq + 1e-12 * (1.0 + f_x.abs());
            let spread = problem.oracle.snapshot_spread(&x_margins);
            let mut inner_anchor = 0.0;
            for i in 0..d {
                inner_anchor += g_x[i] * (state.ytilde[i] - state.x_work[i]);
            }
            let bregman = problem.oracle.snapshot_value() - f_x - inner_anchor;
            let spread_ok = spread <= 2.0 * l * bregman + 1e-12 * (1.0 + spread);
            if !(quad_ok && spread_ok) {
                checks_ok = false;
                break;
            }
        }
        state.y_last.copy_from_slice(&state.y_work);
    }

    if checks_ok {
        for i in 0..d {
            ytilde_acc[i] /= k_f;
        }
        // alternate route: ỹ_s = (A_{s−1}/A_s)·ỹ_{s−1} + a_s/(K·A_s)·Σ_k v_{s,k}
        #[cfg(debug_assertions)]
        {
            for i in 0..d {
                let alt = tail_w * state.ytilde[i] + head_w / k_f * sum_v[i];
                debug_assert!(
                    (ytilde_acc[i] - alt).abs() <= 1e-12 * ytilde_acc[i].abs().max(1.0),
                    "inner-average identity drifted at coordinate {i}"
                );
            }
        }
        let _ = &sum_v;
        state.ytilde = ytilde_acc;
        state.a_prev_outer = a_s;
        state.big_a_prev = big_a;
    }
    EpochOutcome { max_correction, checks_ok }
}

/// First epoch: one prox step against the full gradient at `x₀`.
fn epoch_one(
    problem: &mut CompositeProblem,
    state: &mut VrState,
    k_inner: usize,
    a1: f64,
    literal_z: bool,
) {
    let d = problem.dim();
    let mut g0 = vec![0.0; d];
    problem.oracle.full_gradient(&state.x0, &mut g0);
    seed_epoch_one(problem, state, k_inner, a1, literal_z, &g0);
}

/// Seeds `z` and proxes `v_{1,1}` given a precomputed `∇f(x₀)`.
fn seed_epoch_one(
    problem: &mut CompositeProblem,
    state: &mut VrState,
    k_inner: usize,
    a1: f64,
    literal_z: bool,
    g0: &[f64],
) {
    let d = problem.dim();
    let k_f = k_inner as f64;
    let mut prox_in = vec![0.0; d];
    if literal_z {
        state.z.copy_from_slice(g0);
        for i in 0..d {
            prox_in[i] = state.x0[i] - state.z[i];
        }
    } else {
        for i in 0..d {
            state.z[i] = k_f * a1 * g0[i];
            prox_in[i] = state.x0[i] - state.z[i] / k_f;
        }
    }
    let mut v = vec![0.0; d];
    problem.reg.prox(&prox_in, a1, &mut v).expect("a1 > 0");
    state.v.copy_from_slice(&v);
    state.y_work.copy_from_slice(&v);
    state.y_last.copy_from_slice(&v);
    state.ytilde = v;
    // x_work and x_last stay at x₀ (= x_{1,1}); they serve the s = 2, k = 1
    // extrapolation across the epoch boundary
    state.a_prev_outer = a1;
    state.big_a_prev = a1;
}

fn init_state(dim: usize, seed: u64) -> VrState {
    let x0 = vec![0.0; dim];
    VrState {
        x0: x0.clone(),
        ytilde: x0.clone(),
        mu: vec![0.0; dim],
        v: x0.clone(),
        z: vec![0.0; dim],
        x_work: x0.clone(),
        y_work: x0.clone(),
        x_last: x0.clone(),
        y_last: x0.clone(),
        a_prev_outer: 0.0,
        big_a_prev: 0.0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

fn validate(problem: &CompositeProblem, l: f64, k_inner: usize) -> Result<(), SolverError> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(SolverError::InvalidParameter(format!(
            "smoothness constant must be positive and finite, got {l}"
        )));
    }
    if k_inner == 0 {
        return Err(SolverError::InvalidParameter("inner count must be ≥ 1".into()));
    }
    if problem.oracle.n_samples() == 0 {
        return Err(SolverError::InvalidParameter(
            "finite-sum solver needs at least one component".into(),
        ));
    }
    Ok(())
}

/// Variance-reduced accelerated cyclic run (estimate-sequence epoch-1
/// seeding), started at the origin.
pub fn run_vr_acoder(
    problem: &mut CompositeProblem,
    l: f64,
    k_inner: usize,
    epochs: usize,
    seed: u64,
    control: RunControl,
) -> Result<RunResult, SolverError> {
    run_vr_acoder_with(problem, l, k_inner, epochs, seed, false, control)
}

/// As [`run_vr_acoder`], with the literal epoch-1 seeding `z = ∇f(x₀)`
/// selectable for comparison.
pub fn run_vr_acoder_with(
    problem: &mut CompositeProblem,
    l: f64,
    k_inner: usize,
    epochs: usize,
    seed: u64,
    literal_epoch1_z: bool,
    mut control: RunControl,
) -> Result<RunResult, SolverError> {
    validate(problem, l, k_inner)?;
    let d = problem.dim();
    let gamma = problem.gamma();
    let mut recorder = Recorder::new(&mut control);
    let mut result = RunResult::new(d);
    let mut state = init_state(d, seed);

    let a1 = 1.0 / (4.0 * l);
    epoch_one(problem, &mut state, k_inner, a1, literal_epoch1_z);
    result.schedule.push(SchedulePoint { a: a1, big_a: a1, l });
    result.iterations = 1;
    if recorder.capture_iterates() {
        result.iterates.push(super::IteratePair {
            y: state.ytilde.clone(),
            v: state.v.clone(),
        });
    }
    let objective = problem.objective_probe(&state.ytilde);
    let stopped_at_first_epoch = matches!(
        recorder.record(&mut result, 1, problem.oracle.cost_units(), objective),
        Flow::Stop { .. }
    );

    if !stopped_at_first_epoch {
        for s in 2..=epochs {
            let a_s = vr_step_size(state.big_a_prev, gamma, l, k_inner);
            let big_a = state.big_a_prev + a_s;
            let mut mu = std::mem::take(&mut state.mu);
            problem.oracle.set_snapshot(&state.ytilde, &mut mu);
            state.mu = mu;
            let outcome = run_epoch(problem, &mut state, k_inner, a_s, None);
            result.max_svrg_correction = result.max_svrg_correction.max(outcome.max_correction);
            result.schedule.push(SchedulePoint { a: a_s, big_a, l });
            result.iterations = s;
            if !all_finite(&state.ytilde) || !all_finite(&state.v) {
                return Err(SolverError::NonFinite {
                    what: "variance-reduced solver",
                    iteration: s,
                });
            }
            if recorder.capture_iterates() {
                result.iterates.push(super::IteratePair {
                    y: state.ytilde.clone(),
                    v: state.v.clone(),
                });
            }
            let units = problem.oracle.cost_units();
            if recorder.due(s) || s == epochs || recorder.over_budget(units) {
                let objective = problem.objective_probe(&state.ytilde);
                if let Flow::Stop { converged } = recorder.record(&mut result, s, units, objective)
                {
                    result.converged = converged;
                    break;
                }
            }
        }
    }
    result.y = state.ytilde;
    result.v = state.v;
    Ok(result)
}

/// Adaptive variant: per epoch the constant starts at half the previously
/// accepted value and doubles until, for every inner step, both the quadratic
/// upper bound between `x_{s,k}` and `y_{s,k}` and the anchored
/// gradient-spread bound hold. The sampling stream is reset to the epoch's
/// start on every failed probe, so accepted epochs are reproducible.
pub fn run_ada_vr_acoder(
    problem: &mut CompositeProblem,
    l0: f64,
    k_inner: usize,
    epochs: usize,
    seed: u64,
    mut control: RunControl,
) -> Result<RunResult, SolverError> {
    validate(problem, l0, k_inner)?;
    let d = problem.dim();
    let gamma = problem.gamma();
    let mut recorder = Recorder::new(&mut control);
    let mut result = RunResult::new(d);
    let mut state = init_state(d, seed);
    let cap = l0 * (2.0f64).powi(LINE_SEARCH_CAP_LOG2);

    // epoch 1: backtrack on the prox step against ∇f(x₀)
    let mut g0 = vec![0.0; d];
    problem.oracle.full_gradient(&state.x0, &mut g0);
    let f_x0 = problem.oracle.value_probe(&state.x0);
    let mut l_accepted = l0 / 2.0;
    loop {
        l_accepted *= 2.0;
        if l_accepted > cap {
            return Err(SolverError::LineSearchDiverged { l0, l: l_accepted });
        }
        let a1 = 1.0 / (4.0 * l_accepted);
        seed_epoch_one(problem, &mut state, k_inner, a1, false, &g0);
        let f_v = problem.oracle.full_value(&state.v);
        let mut inner = 0.0;
        let mut dist_sq = 0.0;
        for i in 0..d {
            let diff = state.v[i] - state.x0[i];
            inner += g0[i] * diff;
            dist_sq += diff * diff;
        }
        if f_v <= f_x0 + inner + 0.5 * l_accepted * dist_sq {
            break;
        }
    }
    result.schedule.push(SchedulePoint {
        a: state.a_prev_outer,
        big_a: state.big_a_prev,
        l: l_accepted,
    });
    result.iterations = 1;
    let objective = problem.objective_probe(&state.ytilde);
    if let Flow::Stop { converged } =
        recorder.record(&mut result, 1, problem.oracle.cost_units(), objective)
    {
        result.converged = converged;
        result.y = state.ytilde;
        result.v = state.v;
        return Ok(result);
    }

    for s in 2..=epochs {
        let mut mu = std::mem::take(&mut state.mu);
        problem.oracle.set_snapshot(&state.ytilde, &mut mu);
        state.mu = mu;
        let baseline = state.clone();
        let mut l_s = l_accepted / 2.0;
        let (outcome, a_s) = loop {
            l_s *= 2.0;
            if l_s > cap {
                return Err(SolverError::LineSearchDiverged { l0, l: l_s });
            }
            state = baseline.clone();
            let a_s = vr_step_size(state.big_a_prev, gamma, l_s, k_inner);
            let outcome = run_epoch(problem, &mut state, k_inner, a_s, Some(l_s));
            if outcome.checks_ok {
                break (outcome, a_s);
            }
        };
        l_accepted = l_s;
        result.max_svrg_correction = result.max_svrg_correction.max(outcome.max_correction);
        result.schedule.push(SchedulePoint {
            a: a_s,
            big_a: state.big_a_prev,
            l: l_accepted,
        });
        result.iterations = s;
        if !all_finite(&state.ytilde) || !all_finite(&state.v) {
            return Err(SolverError::NonFinite {
                what: "adaptive variance-reduced solver",
                iteration: s,
            });
        }
        let units = problem.oracle.cost_units();
        if recorder.due(s) || s == epochs || recorder.over_budget(units) {
            let objective = problem.objective_probe(&state.ytilde);
            if let Flow::Stop { converged } = recorder.record(&mut result, s, units, objective) {
                result.converged = converged;
                break;
            }
        }
    }
    result.y = state.ytilde;
    result.v = state.v;
    Ok(result)
}
