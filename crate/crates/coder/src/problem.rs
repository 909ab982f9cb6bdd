//! The composite objective `f + g` handed to solvers.

use thiserror::Error;

use crate::block::BlockPartition;
use crate::oracle::SmoothOracle;
use crate::regularizer::SeparableRegularizer;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("oracle and regularizer partitions differ")]
    PartitionMismatch,
}

/// Smooth oracle plus separable regularizer over one shared partition.
#[derive(Debug)]
pub struct CompositeProblem {
    pub oracle: SmoothOracle,
    pub reg: SeparableRegularizer,
}

impl CompositeProblem {
    pub fn new(oracle: SmoothOracle, reg: SeparableRegularizer) -> Result<Self, ProblemError> {
        if oracle.partition() != reg.partition() {
            return Err(ProblemError::PartitionMismatch);
        }
        Ok(Self { oracle, reg })
    }

    pub fn partition(&self) -> &BlockPartition {
        self.oracle.partition()
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    /// Strong-convexity modulus of the regularizer.
    pub fn gamma(&self) -> f64 {
        self.reg.gamma()
    }

    /// Full objective `f(x) + g(x)` without touching the oracle's cost
    /// counter (instrumentation only).
    pub fn objective_probe(&self, x: &[f64]) -> f64 {
        self.oracle.value_probe(x) + self.reg.value(x)
    }
}
