//! Miniature query-former: learnable queries refined by self-attention,
//! cross-attended over projected visual rows plus prompt embeddings, then
//! pushed through a one-hidden-layer FFN. Single head, no positional
//! encodings, forward only.

use rand::RngCore;

use super::attention::attention_forward;
use super::matrix::Matrix;
use super::KernelError;

/// Number of learnable query rows used by default.
pub const DEFAULT_QUERY_COUNT: usize = 32;

/// Elementwise second-minus-first difference of two equally shaped feature
/// matrices.
pub fn feature_diff(f1: &Matrix, f2: &Matrix) -> Result<Matrix, KernelError> {
    if f1.shape() != f2.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "feature_diff",
            lhs: f1.shape(),
            rhs: f2.shape(),
        });
    }
    f2.sub(f1)
}

#[derive(Debug, Clone)]
pub struct QFormerParams {
    /// Learnable query embeddings, L x d.
    pub queries: Matrix,
    pub self_wq: Matrix,
    pub self_wk: Matrix,
    pub self_wv: Matrix,
    pub cross_wq: Matrix,
    /// Visual key/value projections, D x d.
    pub cross_wk: Matrix,
    pub cross_wv: Matrix,
    pub ffn_w1: Matrix,
    pub ffn_b1: Matrix,
    pub ffn_w2: Matrix,
    pub ffn_b2: Matrix,
}

impl QFormerParams {
    /// Random parameters for `queries` of size L x d over visual features of
    /// width `visual_dim`, with FFN hidden width `hidden`.
    pub fn random(
        query_count: usize,
        d: usize,
        visual_dim: usize,
        hidden: usize,
        rng: &mut impl RngCore,
    ) -> Self {
        Self {
            queries: Matrix::random(query_count, d, rng),
            self_wq: Matrix::random(d, d, rng),
            self_wk: Matrix::random(d, d, rng),
            self_wv: Matrix::random(d, d, rng),
            cross_wq: Matrix::random(d, d, rng),
            cross_wk: Matrix::random(visual_dim, d, rng),
            cross_wv: Matrix::random(visual_dim, d, rng),
            ffn_w1: Matrix::random(d, hidden, rng),
            ffn_b1: Matrix::random(1, hidden, rng),
            ffn_w2: Matrix::random(hidden, d, rng),
            ffn_b2: Matrix::random(1, d, rng),
        }
    }

    pub fn query_count(&self) -> usize {
        self.queries.rows()
    }

    pub fn query_dim(&self) -> usize {
        self.queries.cols()
    }
}

/// Forward pass. Visual keys and values are the stacked `[filtered1; filtered2]`
/// rows projected to the query width, with the prompt embedding rows appended
/// to both sets. Output is `query_count x d`.
pub fn qformer_forward(
    filtered1: &Matrix,
    filtered2: &Matrix,
    prompt_emb: &Matrix,
    params: &QFormerParams,
) -> Result<Matrix, KernelError> {
    if filtered1.shape() != filtered2.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "qformer_forward",
            lhs: filtered1.shape(),
            rhs: filtered2.shape(),
        });
    }
    let d = params.query_dim();
    if prompt_emb.cols() != d {
        return Err(KernelError::ShapeMismatch {
            op: "qformer_forward",
            lhs: prompt_emb.shape(),
            rhs: (prompt_emb.rows(), d),
        });
    }
    if filtered1.cols() != params.cross_wk.rows() {
        return Err(KernelError::ShapeMismatch {
            op: "qformer_forward",
            lhs: filtered1.shape(),
            rhs: params.cross_wk.shape(),
        });
    }

    let q = &params.queries;
    let q_sa = attention_forward(
        &q.matmul(&params.self_wq)?,
        &q.matmul(&params.self_wk)?,
        &q.matmul(&params.self_wv)?,
    )?;

    let visual = filtered1.vconcat(filtered2)?;
    let keys = visual.matmul(&params.cross_wk)?.vconcat(prompt_emb)?;
    let values = visual.matmul(&params.cross_wv)?.vconcat(prompt_emb)?;
    let q_ca = attention_forward(&q_sa.matmul(&params.cross_wq)?, &keys, &values)?;

    let hidden = q_ca
        .matmul(&params.ffn_w1)?
        .add_row_bias(&params.ffn_b1)?
        .map(f64::tanh);
    hidden.matmul(&params.ffn_w2)?.add_row_bias(&params.ffn_b2)
}
