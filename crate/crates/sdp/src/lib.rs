//! Dense primal-dual interior-point solver for small semidefinite programs
//! in linear-matrix-inequality form, with an optional double-double
//! arithmetic mode for degenerate instances.

pub mod dense;
pub mod instance;
pub mod scalar;
pub mod sdpa;
pub mod solver;

pub use dense::Mat;
pub use instance::{LinearEquality, LmiBlock, ReducedInstance, SdpInstance, SparseSym};
pub use scalar::{DoubleDouble, Real};
pub use sdpa::{read_sdpa, write_sdpa};
pub use solver::{
    solve, IterationRecord, Precision, Residuals, SdpSolution, SolveStatus, SolverOptions,
};

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
