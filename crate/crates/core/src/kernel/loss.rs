//! Token-level cross-entropy over explicit probability rows.

use super::matrix::Matrix;
use super::KernelError;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Mean negative log-probability of the target index per row. Each row of
/// `probs` must lie on the simplex within 1e-9 and each target must index a
/// valid class.
pub fn cross_entropy(probs: &Matrix, targets: &[usize]) -> Result<f64, KernelError> {
    if targets.len() != probs.rows() {
        return Err(KernelError::ShapeMismatch {
            op: "cross_entropy",
            lhs: probs.shape(),
            rhs: (targets.len(), 1),
        });
    }
    for r in 0..probs.rows() {
        let sum: f64 = probs.row(r).iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(KernelError::RowOffSimplex { row: r, sum });
        }
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= probs.cols() {
            return Err(KernelError::TargetOutOfRange {
                row: r,
                target: t,
                classes: probs.cols(),
            });
        }
        total -= probs.get(r, t).ln();
    }
    Ok(total / targets.len() as f64)
}
