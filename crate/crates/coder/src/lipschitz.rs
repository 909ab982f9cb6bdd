//! Block Lipschitz models, the masked summary operator, and estimation of
//! both the classical gradient constant `M` and the summary constant `L`.
//!
//! For a GLM oracle with scalar-curvature bound `σ` the per-block matrices
//! are, depending on the loss:
//!
//! * squared loss (exact, the gradient is linear):
//!   `Q_j = (1/n²)·Aᵀ A_j A_jᵀ A`, where `A_j` keeps only block `j`'s columns;
//! * logistic loss (Cauchy–Schwarz bound, provable for any curvature
//!   profile): `Q_j = (σ²/n²)·c_j·AᵀA` with `c_j = Σ_t ‖a_t over block j‖²`.
//!
//! The per-component (finite-sum) model drops the `1/n²` and always uses the
//! `c_j` form, which dominates every single component's requirement.
//!
//! The summary operator is `Q̃ = Σ_j [(Q_j)_{≥j} + (Q_j)_{≥j+1}]`, where
//! `(·)_{≥j}` zeroes the rows and columns of all coordinates that belong to
//! blocks before `j`; the summary constant is `L = √(2·λmax(Q̃))`. `Q̃` is
//! never materialized; its matvec costs a masked Gram application per block.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::BlockPartition;
use crate::data::Dataset;
use crate::oracle::{Loss, SmoothOracle};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-6;
const POWER_MAX_ITER: usize = 20_000;

/// Symmetric PSD linear operator.
pub trait SymOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

/// `scale · AᵀA`.
pub struct GramOperator<'a> {
    matrix: &'a crate::sparse::SparseMatrix,
    scale: f64,
}

impl<'a> GramOperator<'a> {
    pub fn new(matrix: &'a crate::sparse::SparseMatrix, scale: f64) -> Self {
        Self { matrix, scale }
    }
}

impl SymOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.matrix.n_cols()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let mut u = vec![0.0; self.matrix.n_rows()];
        self.matrix.mul_vec(v, &mut u);
        self.matrix.t_mul_vec(&u, self.scale, out);
    }
}

/// Dense symmetric operator, mainly for tests and tiny instances.
pub struct DenseSymOperator {
    pub entries: Vec<Vec<f64>>,
}

impl SymOperator for DenseSymOperator {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.entries.iter().enumerate() {
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIterationOutcome {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn power_run(
    op: &dyn SymOperator,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> PowerIterationOutcome {
    let d = op.dim();
    let mut v = start;
    let norm0: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return PowerIterationOutcome { value: 0.0, iterations: 0, converged: true };
    }
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut u = vec![0.0; d];
    let mut lambda_prev = f64::NAN;
    for it in 1..=max_iter {
        op.apply(&v, &mut u);
        let lambda: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // v is in the null space; for PSD operators the restriction is 0
            return PowerIterationOutcome { value: 0.0, iterations: it, converged: true };
        }
        if !lambda_prev.is_nan() && (lambda - lambda_prev).abs() <= tol * lambda.abs().max(1e-300) {
            return PowerIterationOutcome { value: lambda, iterations: it, converged: true };
        }
        lambda_prev = lambda;
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / norm;
        }
    }
    PowerIterationOutcome {
        value: lambda_prev,
        iterations: max_iter,
        converged: false,
    }
}

/// Largest eigenvalue of a symmetric PSD operator: a deterministic all-ones
/// start plus one seeded random restart, returning the larger estimate.
pub fn power_iteration(
    op: &dyn SymOperator,
    tol: f64,
    max_iter: usize,
    restart_seed: u64,
) -> PowerIterationOutcome {
    let d = op.dim();
    let det = power_run(op, vec![1.0; d], tol, max_iter);
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed);
    let start: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rnd = power_run(op, start, tol, max_iter);
    if rnd.value > det.value {
        rnd
    } else {
        det
    }
}

#[derive(Debug, Clone, Copy)]
enum ModelKind {
    /// `Q_j = scale_j · AᵀA`; scales carried separately.
    ScaledGram,
    /// `Q_j = inv_n_sq · Aᵀ A_j A_jᵀ A`.
    ExactSquared { inv_n_sq: f64 },
}

/// Per-block Lipschitz model: realizes `‖·‖²_{Q_j}` forms and the masked
/// summary operator without materializing any matrix.
pub struct BlockLipschitzModel {
    data: Arc<Dataset>,
    partition: BlockPartition,
    kind: ModelKind,
    /// For `ScaledGram`: the per-block multiplier of `AᵀA`.
    scales: Vec<f64>,
}

impl BlockLipschitzModel {
    /// Model backing Assumption-style block smoothness of the *averaged*
    /// objective `f = (1/n)Σ f_t`.
    pub fn for_oracle(oracle: &SmoothOracle) -> Self {
        let data = Arc::clone(oracle.data());
        let partition = oracle.partition().clone();
        let n = oracle.n_samples() as f64;
        match oracle.loss() {
            Loss::Squared => Self {
                data,
                partition,
                kind: ModelKind::ExactSquared { inv_n_sq: 1.0 / (n * n) },
                scales: Vec::new(),
            },
            Loss::Logistic => {
                let sigma = oracle.sigma();
                let scales = block_col_sumsq(&data, &partition)
                    .into_iter()
                    .map(|c| sigma * sigma / (n * n) * c)
                    .collect();
                Self {
                    data,
                    partition,
                    kind: ModelKind::ScaledGram,
                    scales,
                }
            }
        }
    }

    /// Model dominating every component `f_t` individually (finite-sum
    /// smoothness); used by the variance-reduced solvers.
    pub fn finite_sum(oracle: &SmoothOracle) -> Self {
        let data = Arc::clone(oracle.data());
        let partition = oracle.partition().clone();
        let sigma = oracle.sigma();
        let scales = block_col_sumsq(&data, &partition)
            .into_iter()
            .map(|c| sigma * sigma * c)
            .collect();
        Self {
            data,
            partition,
            kind: ModelKind::ScaledGram,
            scales,
        }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    /// `δᵀ Q_j δ` for every block, sharing one `A·δ` pass.
    pub fn quadratic_forms(&self, delta: &[f64], out: &mut [f64]) {
        let m = self.partition.num_blocks();
        assert_eq!(out.len(), m);
        let matrix = &self.data.matrix;
        let mut u = vec![0.0; matrix.n_rows()];
        matrix.mul_vec(delta, &mut u);
        match self.kind {
            ModelKind::ScaledGram => {
                let usq: f64 = u.iter().map(|x| x * x).sum();
                for j in 0..m {
                    out[j] = self.scales[j] * usq;
                }
            }
            ModelKind::ExactSquared { inv_n_sq } => {
                for j in 0..m {
                    let range = self.partition.range(j);
                    let mut blk = vec![0.0; range.len()];
                    matrix.t_mul_vec_cols_into_block(&u, range, 1.0, &mut blk);
                    out[j] = inv_n_sq * blk.iter().map(|x| x * x).sum::<f64>();
                }
            }
        }
    }

    /// The masked aggregate `Q̃` as an implicit symmetric PSD operator.
    pub fn summary_operator(&self) -> SummaryOperator<'_> {
        SummaryOperator { model: self }
    }
}

fn block_col_sumsq(data: &Dataset, partition: &BlockPartition) -> Vec<f64> {
    let m = partition.num_blocks();
    let matrix = &data.matrix;
    (0..m)
        .map(|j| {
            partition
                .range(j)
                .map(|c| matrix.col(c).map(|(_, v)| v * v).sum::<f64>())
                .sum()
        })
        .collect()
}

/// `Q̃ = Σ_j [(Q_j)_{≥j} + (Q_j)_{≥j+1}]`, symmetric PSD by construction.
pub struct SummaryOperator<'a> {
    model: &'a BlockLipschitzModel,
}

impl SymOperator for SummaryOperator<'_> {
    fn dim(&self) -> usize {
        self.model.partition.dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let matrix = &self.model.data.matrix;
        let partition = &self.model.partition;
        let boundaries = partition.boundaries();
        let m = partition.num_blocks();
        let d = partition.dim();
        let n_rows = matrix.n_rows();
        match self.model.kind {
            ModelKind::ScaledGram => {
                // Merge the 2m masked Gram terms by mask offset: the mask at
                // boundaries[i] carries scale_i (from (Q_i)_{≥i}) plus
                // scale_{i−1} (from (Q_{i−1})_{≥i}); the offset-d mask is the
                // zero operator.
                let mut u = vec![0.0; n_rows];
                for i in 0..m {
                    let b = boundaries[i];
                    let scale = self.model.scales[i]
                        + if i > 0 { self.model.scales[i - 1] } else { 0.0 };
                    if scale == 0.0 {
                        continue;
                    }
                    u.fill(0.0);
                    matrix.add_mul_vec_cols(v, b..d, &mut u);
                    matrix.t_add_mul_vec_cols(&u, b..d, scale, out);
                }
            }
            ModelKind::ExactSquared { inv_n_sq } => {
                let mut u = vec![0.0; n_rows];
                let mut u2 = vec![0.0; n_rows];
                for j in 0..m {
                    let block = partition.range(j);
                    for &b in &[boundaries[j], boundaries[j + 1]] {
                        if b >= d {
                            continue;
                        }
                        u.fill(0.0);
                        matrix.add_mul_vec_cols(v, b..d, &mut u);
                        let mut w = vec![0.0; block.len()];
                        matrix.t_mul_vec_cols_into_block(&u, block.clone(), 1.0, &mut w);
                        u2.fill(0.0);
                        matrix.add_mul_block_cols(&w, block.clone(), &mut u2);
                        matrix.t_add_mul_vec_cols(&u2, b..d, inv_n_sq, out);
                    }
                }
            }
        }
    }
}

/// An estimated constant together with the spectral tolerance it was computed
/// at. Power iteration approaches `λmax` from below, so consumers that need a
/// safe upper bound should use [`ConstantEstimate::safe`].
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimate {
    pub value: f64,
    pub tol: f64,
    pub converged: bool,
}

impl ConstantEstimate {
    /// The estimate inflated by `1 + 10·tol`.
    pub fn safe(&self) -> f64 {
        self.value * (1.0 + 10.0 * self.tol)
    }
}

/// Classical gradient Lipschitz constant `M = (σ/n)·λmax(AᵀA)`.
pub fn classical_m(oracle: &SmoothOracle, tol: f64) -> ConstantEstimate {
    let matrix = &oracle.data().matrix;
    let scale = oracle.sigma() / oracle.n_samples() as f64;
    let op = GramOperator::new(matrix, scale);
    let out = power_iteration(&op, tol, POWER_MAX_ITER, 0x5eed);
    ConstantEstimate { value: out.value.max(0.0), tol, converged: out.converged }
}

/// Summary constant `L = √(2·λmax(Q̃))` for the averaged objective.
pub fn coder_l(oracle: &SmoothOracle, tol: f64) -> ConstantEstimate {
    let model = BlockLipschitzModel::for_oracle(oracle);
    summary_constant(&model, tol)
}

/// Summary constant of the finite-sum (per-component) model, the right
/// constant for the variance-reduced solvers.
pub fn coder_l_finite_sum(oracle: &SmoothOracle, tol: f64) -> ConstantEstimate {
    let model = BlockLipschitzModel::finite_sum(oracle);
    summary_constant(&model, tol)
}

pub fn summary_constant(model: &BlockLipschitzModel, tol: f64) -> ConstantEstimate {
    let op = model.summary_operator();
    let out = power_iteration(&op, tol, POWER_MAX_ITER, 0x5eed);
    ConstantEstimate {
        value: (2.0 * out.value.max(0.0)).sqrt(),
        tol,
        converged: out.converged,
    }
}

/// Sampled verification report for the block smoothness model and the two
/// summary-constant inequalities.
#[derive(Debug, Clone, Copy)]
pub struct VerificationReport {
    /// Max relative violation of the per-block seminorm bound.
    pub block_bound: f64,
    /// Max relative violation of the quadratic upper bound of `f`.
    pub upper_bound: f64,
    /// Max relative violation of the gradient-difference bound.
    pub gradient_bound: f64,
    pub trials: usize,
}

impl VerificationReport {
    pub fn max_violation(&self) -> f64 {
        self.block_bound.max(self.upper_bound).max(self.gradient_bound)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

/// Samples random pairs and all blocks, reporting the worst relative
/// violation of the per-block bound and of both summary inequalities with
/// the supplied `l`.
pub fn verify_block_lipschitz(
    oracle: &mut SmoothOracle,
    model: &BlockLipschitzModel,
    l: f64,
    trials: usize,
    seed: u64,
) -> VerificationReport {
    let d = oracle.dim();
    let m = oracle.partition().num_blocks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerificationReport {
        block_bound: 0.0,
        upper_bound: 0.0,
        gradient_bound: 0.0,
        trials,
    };
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut forms = vec![0.0; m];
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let fx = oracle.value_probe(&x);
        let fy = oracle.value_probe(&y);
        oracle.full_gradient(&x, &mut gx);
        oracle.full_gradient(&y, &mut gy);
        model.quadratic_forms(&delta, &mut forms);
        for j in 0..m {
            let range = oracle.partition().range(j);
            let lhs: f64 = range.map(|c| (gy[c] - gx[c]) * (gy[c] - gx[c])).sum();
            let viol = (lhs - forms[j]) / forms[j].max(1.0);
            report.block_bound = report.block_bound.max(viol);
        }
        let inner: f64 = gx.iter().zip(&delta).map(|(g, dl)| g * dl).sum();
        let dsq: f64 = delta.iter().map(|v| v * v).sum();
        let upper_viol = (fy - fx - inner - 0.5 * l * dsq) / (1.0 + fx.abs());
        report.upper_bound = report.upper_bound.max(upper_viol);
        let gdiff: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum();
        let bregman = fy - fx - inner;
        let grad_viol = (gdiff - 2.0 * l * bregman) / (2.0 * l * bregman).max(1.0);
        report.gradient_bound = report.gradient_bound.max(grad_viol);
    }
    report
}

/// Per-component version of the block bound for the finite-sum model.
pub fn verify_component_block_lipschitz(
    oracle: &mut SmoothOracle,
    model: &BlockLipschitzModel,
    trials: usize,
    seed: u64,
) -> f64 {
    let d = oracle.dim();
    let m = oracle.partition().num_blocks();
    let n = oracle.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut forms = vec![0.0; m];
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let t = rng.gen_range(0..n);
        model.quadratic_forms(&delta, &mut forms);
        for j in 0..m {
            let len = oracle.partition().block_size(j);
            let mut bx = vec![0.0; len];
            let mut by = vec![0.0; len];
            oracle.component_block_gradient_hybrid(t, &x, &x, j, &mut bx);
            oracle.component_block_gradient_hybrid(t, &y, &y, j, &mut by);
            let lhs: f64 = bx.iter().zip(&by).map(|(a, b)| (a - b) * (a - b)).sum();
            worst = worst.max((lhs - forms[j]) / forms[j].max(1.0));
        }
    }
    worst
}
