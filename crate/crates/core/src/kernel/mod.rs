//! Reference implementation of the difference-perception math: bi-temporal
//! feature differencing, the contextualize/gate/filter relation-measuring
//! block with analytic gradients, a miniature query-former forward path, and
//! the token-level cross-entropy objective.
//!
//! Everything here is double precision and verified against scalar oracles
//! and central finite differences (see [`check`]).

mod attention;
mod csrm;
mod gradcheck;
mod loss;
mod matrix;
mod qformer;

pub mod check;

pub use attention::{attention_forward, softmax_rows};
pub use csrm::{csrm_backward, csrm_forward, CsrmCache, CsrmGradients, CsrmParams};
pub use gradcheck::{grad_check, registered_op, DifferentiableOp};
pub use loss::cross_entropy;
pub use matrix::Matrix;
pub use qformer::{feature_diff, qformer_forward, QFormerParams, DEFAULT_QUERY_COUNT};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("data length {actual} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        actual: usize,
    },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("probability row {row} sums to {sum}, not 1")]
    RowOffSimplex { row: usize, sum: f64 },
    #[error("target {target} out of range for {classes} classes (row {row})")]
    TargetOutOfRange {
        row: usize,
        target: usize,
        classes: usize,
    },
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("no registered op named {0:?}")]
    UnknownOp(String),
}
