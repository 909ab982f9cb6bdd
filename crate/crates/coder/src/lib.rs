//! Composite convex optimization via cyclic block-coordinate dual averaging
//! with gradient extrapolation, plus variance-reduced and line-search
//! adaptive variants.
//!
//! The crate covers the full pipeline used by the `coder` benchmark binary:
//! LibSVM ingestion ([`data`]), GLM smooth oracles ([`oracle`]), separable
//! regularizers with closed-form block proxes ([`regularizer`]), summary
//! Lipschitz-constant estimation ([`lipschitz`]), the solvers themselves
//! ([`solver`]), and high-accuracy reference solutions ([`reference`](mod@reference)).

pub mod block;
pub mod data;
pub mod lipschitz;
pub mod oracle;
pub mod problem;
pub mod reference;
pub mod regularizer;
pub mod solver;
pub mod sparse;
pub mod synth;

pub use block::BlockPartition;
pub use data::Dataset;
pub use oracle::{Loss, SmoothOracle};
pub use problem::CompositeProblem;
pub use regularizer::{BlockPenalty, SeparableRegularizer};
pub use sparse::SparseMatrix;
