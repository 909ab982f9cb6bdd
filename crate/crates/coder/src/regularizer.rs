//! Block-separable regularizers with closed-form proximal operators.

use thiserror::Error;

use crate::block::BlockPartition;

#[derive(Debug, Error, PartialEq)]
pub enum RegularizerError {
    #[error("negative penalty weight {0}")]
    NegativeWeight(f64),
    #[error("prox step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("expected {expected} block kinds, got {got}")]
    KindCount { expected: usize, got: usize },
}

/// Per-block penalty kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockPenalty {
    Zero,
    L1(f64),
    Ridge(f64),
    ElasticNet { l1: f64, l2: f64 },
}

impl BlockPenalty {
    fn validate(self) -> Result<Self, RegularizerError> {
        let check = |w: f64| {
            if w < 0.0 {
                Err(RegularizerError::NegativeWeight(w))
            } else {
                Ok(())
            }
        };
        match self {
            BlockPenalty::Zero => {}
            BlockPenalty::L1(l1) => check(l1)?,
            BlockPenalty::Ridge(l2) => check(l2)?,
            BlockPenalty::ElasticNet { l1, l2 } => {
                check(l1)?;
                check(l2)?;
            }
        }
        Ok(self)
    }

    /// Strong-convexity modulus contributed by this block.
    fn gamma(self) -> f64 {
        match self {
            BlockPenalty::Zero | BlockPenalty::L1(_) => 0.0,
            BlockPenalty::Ridge(l2) => l2,
            BlockPenalty::ElasticNet { l2, .. } => l2,
        }
    }

    fn value(self, u: &[f64]) -> f64 {
        match self {
            BlockPenalty::Zero => 0.0,
            BlockPenalty::L1(l1) => l1 * u.iter().map(|x| x.abs()).sum::<f64>(),
            BlockPenalty::Ridge(l2) => 0.5 * l2 * u.iter().map(|x| x * x).sum::<f64>(),
            BlockPenalty::ElasticNet { l1, l2 } => {
                l1 * u.iter().map(|x| x.abs()).sum::<f64>()
                    + 0.5 * l2 * u.iter().map(|x| x * x).sum::<f64>()
            }
        }
    }

    /// `argmin_p { τ·g(p) + ½‖p − u‖² }` written into `out`.
    fn prox(self, u: &[f64], tau: f64, out: &mut [f64]) {
        match self {
            BlockPenalty::Zero => out.copy_from_slice(u),
            BlockPenalty::L1(l1) => {
                let thr = tau * l1;
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = soft_threshold(x, thr);
                }
            }
            BlockPenalty::Ridge(l2) => {
                let shrink = 1.0 / (1.0 + tau * l2);
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = x * shrink;
                }
            }
            BlockPenalty::ElasticNet { l1, l2 } => {
                let thr = tau * l1;
                let shrink = 1.0 / (1.0 + tau * l2);
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = soft_threshold(x, thr) * shrink;
                }
            }
        }
    }

    /// Canonical subgradient at `u` (0 chosen at the kink).
    fn subgradient(self, u: &[f64], out: &mut [f64]) {
        match self {
            BlockPenalty::Zero => out.fill(0.0),
            BlockPenalty::L1(l1) => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = l1 * x.signum() * if x == 0.0 { 0.0 } else { 1.0 };
                }
            }
            BlockPenalty::Ridge(l2) => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = l2 * x;
                }
            }
            BlockPenalty::ElasticNet { l1, l2 } => {
                for (o, &x) in out.iter_mut().zip(u) {
                    let s = if x == 0.0 { 0.0 } else { x.signum() };
                    *o = l1 * s + l2 * x;
                }
            }
        }
    }

    /// Unconstrained block minimizer of `g` alone (used when a block carries
    /// no smooth curvature at all).
    fn minimizer(self, current: &[f64], out: &mut [f64]) {
        match self {
            BlockPenalty::Zero => out.copy_from_slice(current),
            _ => out.fill(0.0),
        }
    }
}

/// Exactly zero at the kink `|u| ≤ thr`.
pub fn soft_threshold(u: f64, thr: f64) -> f64 {
    if u > thr {
        u - thr
    } else if u < -thr {
        u + thr
    } else {
        0.0
    }
}

/// `g(x) = Σ_j g_j(x_block_j)`, γ-strongly convex with
/// `γ = min_j γ_j` (zero unless every block has a quadratic term).
#[derive(Debug, Clone)]
pub struct SeparableRegularizer {
    partition: BlockPartition,
    kinds: Vec<BlockPenalty>,
    gamma: f64,
}

impl SeparableRegularizer {
    pub fn uniform(partition: BlockPartition, kind: BlockPenalty) -> Result<Self, RegularizerError> {
        let kinds = vec![kind.validate()?; partition.num_blocks()];
        Ok(Self::assemble(partition, kinds))
    }

    pub fn per_block(
        partition: BlockPartition,
        kinds: Vec<BlockPenalty>,
    ) -> Result<Self, RegularizerError> {
        if kinds.len() != partition.num_blocks() {
            return Err(RegularizerError::KindCount {
                expected: partition.num_blocks(),
                got: kinds.len(),
            });
        }
        let kinds = kinds
            .into_iter()
            .map(BlockPenalty::validate)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::assemble(partition, kinds))
    }

    fn assemble(partition: BlockPartition, kinds: Vec<BlockPenalty>) -> Self {
        let gamma = kinds
            .iter()
            .map(|k| k.gamma())
            .fold(f64::INFINITY, f64::min)
            .min(f64::INFINITY);
        let gamma = if gamma.is_finite() { gamma } else { 0.0 };
        Self { partition, kinds, gamma }
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn block_kind(&self, j: usize) -> BlockPenalty {
        self.kinds[j]
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.partition.num_blocks())
            .map(|j| self.kinds[j].value(self.partition.slice(x, j)))
            .sum()
    }

    pub fn block_value(&self, j: usize, u: &[f64]) -> f64 {
        self.kinds[j].value(u)
    }

    /// Per-block prox; `u` and `out` are block-sized.
    pub fn block_prox(
        &self,
        j: usize,
        u: &[f64],
        tau: f64,
        out: &mut [f64],
    ) -> Result<(), RegularizerError> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(RegularizerError::NonPositiveStep(tau));
        }
        self.kinds[j].prox(u, tau, out);
        Ok(())
    }

    /// Full-vector prox, block by block.
    pub fn prox(&self, u: &[f64], tau: f64, out: &mut [f64]) -> Result<(), RegularizerError> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(RegularizerError::NonPositiveStep(tau));
        }
        for j in 0..self.partition.num_blocks() {
            let r = self.partition.range(j);
            self.kinds[j].prox(&u[r.clone()], tau, &mut out[r]);
        }
        Ok(())
    }

    pub fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..self.partition.num_blocks() {
            let r = self.partition.range(j);
            self.kinds[j].subgradient(&x[r.clone()], &mut out[r]);
        }
    }

    /// Minimizer of the block penalty alone, for blocks with no data support.
    pub fn block_minimizer(&self, j: usize, current: &[f64], out: &mut [f64]) {
        self.kinds[j].minimizer(current, out);
    }
}
