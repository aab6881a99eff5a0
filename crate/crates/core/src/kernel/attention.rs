//! Single-head scaled dot-product attention and its softmax building block.

use super::matrix::Matrix;
use super::KernelError;

/// Per-row softmax with max subtraction for numerical stability. Every output
/// row sums to 1.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |r, c| {
        let row = m.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        (m.get(r, c) - max).exp() / sum
    })
}

/// softmax(Q K^T / sqrt(d)) V with d taken from the query width.
pub fn attention_forward(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix, KernelError> {
    if q.cols() != k.cols() {
        return Err(KernelError::ShapeMismatch {
            op: "attention_forward",
            lhs: q.shape(),
            rhs: k.shape(),
        });
    }
    if k.rows() != v.rows() {
        return Err(KernelError::ShapeMismatch {
            op: "attention_forward",
            lhs: k.shape(),
            rhs: v.shape(),
        });
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let scores = q.matmul(&k.transpose())?.scale(scale);
    softmax_rows(&scores).matmul(v)
}
