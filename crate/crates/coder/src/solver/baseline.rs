//! Reference baselines: full proximal gradient and randomized proximal block
//! coordinate descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lipschitz::{power_iteration, SymOperator};
use crate::problem::CompositeProblem;

use super::{all_finite, Flow, Recorder, RunControl, RunResult, SolverError};

/// Proximal gradient from the origin: `x ← prox_{g/M}(x − ∇f(x)/M)`.
pub fn run_proxgrad(
    problem: &mut CompositeProblem,
    m_const: f64,
    max_iter: usize,
    control: RunControl,
) -> Result<RunResult, SolverError> {
    let x0 = vec![0.0; problem.dim()];
    run_proxgrad_from(problem, m_const, max_iter, &x0, control)
}

pub fn run_proxgrad_from(
    problem: &mut CompositeProblem,
    m_const: f64,
    max_iter: usize,
    x0: &[f64],
    mut control: RunControl,
) -> Result<RunResult, SolverError> {
    if !(m_const > 0.0) || !m_const.is_finite() {
        return Err(SolverError::InvalidParameter(format!(
            "step constant must be positive and finite, got {m_const}"
        )));
    }
    let d = problem.dim();
    let mut recorder = Recorder::new(&mut control);
    let mut result = RunResult::new(d);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut next = vec![0.0; d];
    for k in 1..=max_iter {
        problem.oracle.full_gradient(&x, &mut g);
        for i in 0..d {
            u[i] = x[i] - g[i] / m_const;
        }
        problem
            .reg
            .prox(&u, 1.0 / m_const, &mut next)
            .expect("positive step");
        std::mem::swap(&mut x, &mut next);
        result.iterations = k;
        if !all_finite(&x) {
            return Err(SolverError::NonFinite { what: "proximal gradient", iteration: k });
        }
        let units = problem.oracle.cost_units();
        if recorder.due(k) || k == max_iter || recorder.over_budget(units) {
            let objective = problem.objective_probe(&x);
            if let Flow::Stop { converged } = recorder.record(&mut result, k, units, objective) {
                result.converged = converged;
                break;
            }
        }
    }
    result.v = x.clone();
    result.y = x;
    Ok(result)
}

/// Per-block step constants for the randomized baseline:
/// `M_j = (σ/n)·λmax(block-column Gram)`.
pub fn rcdm_block_constants(problem: &CompositeProblem, tol: f64) -> Vec<f64> {
    let oracle = &problem.oracle;
    let matrix = &oracle.data().matrix;
    let scale = oracle.sigma() / oracle.n_samples() as f64;
    let partition = oracle.partition();
    (0..partition.num_blocks())
        .map(|j| {
            let range = partition.range(j);
            if matrix.cols_nnz(range.clone()) == 0 {
                return 0.0;
            }
            if range.len() == 1 {
                // 1×1 Gram: the column's squared norm
                let c = range.start;
                let sumsq: f64 = matrix.col(c).map(|(_, v)| v * v).sum();
                return scale * sumsq;
            }
            let op = BlockGramOperator { matrix, range: range.clone(), scale };
            power_iteration(&op, tol, 10_000, 0xb10c).value.max(0.0)
        })
        .collect()
}

struct BlockGramOperator<'a> {
    matrix: &'a crate::sparse::SparseMatrix,
    range: std::ops::Range<usize>,
    scale: f64,
}

impl SymOperator for BlockGramOperator<'_> {
    fn dim(&self) -> usize {
        self.range.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let mut u = vec![0.0; self.matrix.n_rows()];
        self.matrix.add_mul_block_cols(v, self.range.clone(), &mut u);
        self.matrix
            .t_mul_vec_cols_into_block(&u, self.range.clone(), self.scale, out);
    }
}

/// Randomized proximal block coordinate descent; one outer iteration draws
/// `m` blocks uniformly at random. Blocks with no data support are sent to
/// the minimizer of their own penalty.
pub fn run_rcdm(
    problem: &mut CompositeProblem,
    block_constants: &[f64],
    max_iter: usize,
    seed: u64,
    mut control: RunControl,
) -> Result<RunResult, SolverError> {
    let d = problem.dim();
    let m = problem.partition().num_blocks();
    if block_constants.len() != m {
        return Err(SolverError::InvalidParameter(format!(
            "expected {m} block constants, got {}",
            block_constants.len()
        )));
    }
    let mut recorder = Recorder::new(&mut control);
    let mut result = RunResult::new(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    problem.oracle.begin_sweep(&x);
    let mut blk = Vec::new();
    let mut prox_in = Vec::new();
    let mut prox_out = Vec::new();
    for k in 1..=max_iter {
        for _ in 0..m {
            let j = rng.gen_range(0..m);
            let range = problem.partition().range(j);
            let len = range.len();
            blk.resize(len, 0.0);
            prox_in.resize(len, 0.0);
            prox_out.resize(len, 0.0);
            let m_j = block_constants[j];
            if m_j > 0.0 {
                problem.oracle.sweep_block_gradient(j, &mut blk);
                for (offset, c) in range.clone().enumerate() {
                    prox_in[offset] = x[c] - blk[offset] / m_j;
                }
                problem
                    .reg
                    .block_prox(j, &prox_in, 1.0 / m_j, &mut prox_out)
                    .expect("positive step");
            } else {
                let current: Vec<f64> = x[range.clone()].to_vec();
                problem.reg.block_minimizer(j, &current, &mut prox_out);
            }
            x[range].copy_from_slice(&prox_out);
            problem.oracle.sweep_flip_block(j, &prox_out);
        }
        result.iterations = k;
        if !all_finite(&x) {
            return Err(SolverError::NonFinite {
                what: "randomized block descent",
                iteration: k,
            });
        }
        let units = problem.oracle.cost_units();
        if recorder.due(k) || k == max_iter || recorder.over_budget(units) {
            let objective = problem.objective_probe(&x);
            if let Flow::Stop { converged } = recorder.record(&mut result, k, units, objective) {
                result.converged = converged;
                break;
            }
        }
    }
    result.v = x.clone();
    result.y = x;
    Ok(result)
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

    fn quadratic_problem(diag: &[f64], targets: &[f64], reg: BlockPenalty) -> CompositeProblem {
        // f(x) = (1/(2n)) Σ (d_t x_t − b_t)², rows d_t·e_t
        let d = diag.len();
        let rows: Vec<Vec<(usize, f64)>> = diag
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![(i, v)])
            .collect();
        let matrix = SparseMatrix::from_rows(d, &rows).unwrap();
        let ds = Dataset::new(matrix, targets.to_vec()).unwrap();
        let partition = BlockPartition::coordinates(d).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, reg).unwrap();
        CompositeProblem::new(oracle, reg).unwrap()
    }

    #[test]
    fn proxgrad_one_step_quadratic() {
        // f(x) = ½x², M = 1, x0 = 1: a single step lands on the minimizer
        let matrix = SparseMatrix::from_rows(1, &[vec![(0usize, 1.0)]]).unwrap();
        let ds = Dataset::new(matrix, vec![0.0]).unwrap();
        let partition = BlockPartition::single(1).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, BlockPenalty::Zero).unwrap();
        let mut problem = CompositeProblem::new(oracle, reg).unwrap();
        let out =
            run_proxgrad_from(&mut problem, 1.0, 1, &[1.0], RunControl::default()).unwrap();
        assert_eq!(out.y[0], 0.0);
    }

    #[test]
    fn proxgrad_scalar_lasso_first_step() {
        // f = ½(x−2)², λ1 = 1, M = 1, x0 = 0 → x1 = prox(2) = 1
        let matrix = SparseMatrix::from_rows(1, &[vec![(0usize, 1.0)]]).unwrap();
        let ds = Dataset::new(matrix, vec![2.0]).unwrap();
        let partition = BlockPartition::single(1).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, BlockPenalty::L1(1.0)).unwrap();
        let mut problem = CompositeProblem::new(oracle, reg).unwrap();
        let out = run_proxgrad(&mut problem, 1.0, 1, RunControl::default()).unwrap();
        assert_eq!(out.y[0], 1.0);
    }

    #[test]
    fn proxgrad_objective_is_nonincreasing() {
        let mut problem = quadratic_problem(&[1.0, 2.0, 0.5], &[1.0, -2.0, 0.25], BlockPenalty::L1(0.1));
        let m_const = crate::lipschitz::classical_m(&problem.oracle, 1e-8).safe();
        let out = run_proxgrad(&mut problem, m_const, 50, RunControl::default()).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-12);
        }
    }

    #[test]
    fn rcdm_block_constants_for_coordinate_blocks() {
        let problem = quadratic_problem(&[1.0, 2.0], &[0.0, 0.0], BlockPenalty::Zero);
        let consts = rcdm_block_constants(&problem, 1e-8);
        // (σ/n)·col sumsq with σ = 1, n = 2
        assert!((consts[0] - 0.5).abs() < 1e-12);
        assert!((consts[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rcdm_solves_diagonal_quadratic_exactly_per_draw() {
        // with coordinate blocks and exact per-coordinate constants, each
        // sampled step solves its coordinate: after enough draws x is optimal
        let mut problem = quadratic_problem(&[1.0, 2.0], &[1.0, 4.0], BlockPenalty::Zero);
        let consts = rcdm_block_constants(&problem, 1e-10);
        let out = run_rcdm(&mut problem, &consts, 40, 7, RunControl::default()).unwrap();
        // minimizers: d_t x_t = b_t
        assert!((out.y[0] - 1.0).abs() < 1e-9);
        assert!((out.y[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rcdm_single_block_matches_proxgrad() {
        let build = || {
            let matrix =
                SparseMatrix::from_dense(&[vec![1.0, 0.5], vec![-0.25, 1.0], vec![0.5, 0.5]]);
            let ds = Dataset::new(matrix, vec![1.0, -1.0, 0.5]).unwrap();
            let partition = BlockPartition::single(2).unwrap();
            let oracle =
                SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
            let reg = SeparableRegularizer::uniform(partition, BlockPenalty::L1(0.05)).unwrap();
            CompositeProblem::new(oracle, reg).unwrap()
        };
        let mut p1 = build();
        let mut p2 = build();
        let m_const = rcdm_block_constants(&p1, 1e-10)[0];
        let a = run_proxgrad(&mut p1, m_const, 25, RunControl::default()).unwrap();
        let b = run_rcdm(&mut p2, &[m_const], 25, 99, RunControl::default()).unwrap();
        for (x, y) in a.y.iter().zip(&b.y) {
            assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn rcdm_is_seed_deterministic() {
        let build = || quadratic_problem(&[1.0, 3.0, 0.5], &[1.0, 0.0, -2.0], BlockPenalty::L1(0.1));
        let consts = rcdm_block_constants(&build(), 1e-8);
        let mut p1 = build();
        let mut p2 = build();
        let a = run_rcdm(&mut p1, &consts, 20, 1234, RunControl::default()).unwrap();
        let b = run_rcdm(&mut p2, &consts, 20, 1234, RunControl::default()).unwrap();
        assert_eq!(a.y, b.y);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            assert_eq!(ra.objective, rb.objective);
            assert_eq!(ra.grad_units, rb.grad_units);
        }
    }

    #[test]
    fn rcdm_zero_support_block_goes_to_penalty_minimizer() {
        // second coordinate has no data: with an L1 penalty it must be 0
        let rows = vec![vec![(0usize, 1.0)]];
        let matrix = SparseMatrix::from_rows(2, &rows).unwrap();
        let ds = Dataset::new(matrix, vec![1.0]).unwrap();
        let partition = BlockPartition::coordinates(2).unwrap();
        let oracle = SmoothOracle::new(Arc::new(ds), Loss::Squared, partition.clone()).unwrap();
        let reg = SeparableRegularizer::uniform(partition, BlockPenalty::L1(0.01)).unwrap();
        let mut problem = CompositeProblem::new(oracle, reg).unwrap();
        let consts = rcdm_block_constants(&problem, 1e-8);
        assert_eq!(consts[1], 0.0);
        let out = run_rcdm(&mut problem, &consts, 30, 5, RunControl::default()).unwrap();
        assert_eq!(out.y[1], 0.0);
        assert!((out.y[0] - 0.99).abs() < 1e-6); // soft-thresholded least squares
    }
}
