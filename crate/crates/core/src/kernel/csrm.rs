//! Cross-semantic relation measuring: contextualize with tanh, gate with
//! sigmoid, filter by elementwise product. Two branches share the raw
//! difference features; each branch concatenates them with its own temporal
//! features, difference block first.

use rand::RngCore;

use super::matrix::Matrix;
use super::qformer::feature_diff;
use super::KernelError;

/// Weights and biases for both branches. All weight matrices are D x 2D and
/// act on the concatenated [diff; features] rows; biases are 1 x D.
#[derive(Debug, Clone)]
pub struct CsrmParams {
    pub ctx_w1: Matrix,
    pub ctx_b1: Matrix,
    pub ctx_w2: Matrix,
    pub ctx_b2: Matrix,
    pub gate_w1: Matrix,
    pub gate_b1: Matrix,
    pub gate_w2: Matrix,
    pub gate_b2: Matrix,
}

impl CsrmParams {
    pub fn zeros(dim: usize) -> Self {
        let w = || Matrix::zeros(dim, 2 * dim);
        let b = || Matrix::zeros(1, dim);
        Self {
            ctx_w1: w(),
            ctx_b1: b(),
            ctx_w2: w(),
            ctx_b2: b(),
            gate_w1: w(),
            gate_b1: b(),
            gate_w2: w(),
            gate_b2: b(),
        }
    }

    pub fn random(dim: usize, rng: &mut impl RngCore) -> Self {
        let mut w = |r, c| Matrix::random(r, c, rng);
        let ctx_w1 = w(dim, 2 * dim);
        let ctx_b1 = w(1, dim);
        let ctx_w2 = w(dim, 2 * dim);
        let ctx_b2 = w(1, dim);
        let gate_w1 = w(dim, 2 * dim);
        let gate_b1 = w(1, dim);
        let gate_w2 = w(dim, 2 * dim);
        let gate_b2 = w(1, dim);
        Self {
            ctx_w1,
            ctx_b1,
            ctx_w2,
            ctx_b2,
            gate_w1,
            gate_b1,
            gate_w2,
            gate_b2,
        }
    }

    /// Feature dimension D shared by all members.
    pub fn dim(&self) -> usize {
        self.ctx_w1.rows()
    }

    fn validate(&self) -> Result<(), KernelError> {
        let d = self.dim();
        for w in [&self.ctx_w1, &self.ctx_w2, &self.gate_w1, &self.gate_w2] {
            if w.shape() != (d, 2 * d) {
                return Err(KernelError::ShapeMismatch {
                    op: "csrm_params",
                    lhs: (d, 2 * d),
                    rhs: w.shape(),
                });
            }
        }
        for b in [&self.ctx_b1, &self.ctx_b2, &self.gate_b1, &self.gate_b2] {
            if b.shape() != (1, d) {
                return Err(KernelError::ShapeMismatch {
                    op: "csrm_params",
                    lhs: (1, d),
                    rhs: b.shape(),
                });
            }
        }
        Ok(())
    }
}

/// Intermediates saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct CsrmCache {
    params: CsrmParams,
    x1: Matrix,
    x2: Matrix,
    c1: Matrix,
    c2: Matrix,
    g1: Matrix,
    g2: Matrix,
}

/// Gradients with respect to both inputs and every parameter; shapes mirror
/// the primals exactly.
#[derive(Debug, Clone)]
pub struct CsrmGradients {
    pub f1: Matrix,
    pub f2: Matrix,
    pub params: CsrmParams,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn branch_forward(
    x: &Matrix,
    ctx_w: &Matrix,
    ctx_b: &Matrix,
    gate_w: &Matrix,
    gate_b: &Matrix,
) -> Result<(Matrix, Matrix, Matrix), KernelError> {
    let ctx = x
        .matmul(&ctx_w.transpose())?
        .add_row_bias(ctx_b)?
        .map(f64::tanh);
    let gate = x
        .matmul(&gate_w.transpose())?
        .add_row_bias(gate_b)?
        .map(sigmoid);
    let filtered = gate.hadamard(&ctx)?;
    Ok((ctx, gate, filtered))
}

/// Runs both branches: contexts via tanh, gates via sigmoid, outputs via the
/// elementwise product. Returns the filtered features and a cache for
/// [`csrm_backward`].
pub fn csrm_forward(
    f1: &Matrix,
    f2: &Matrix,
    params: &CsrmParams,
) -> Result<(Matrix, Matrix, CsrmCache), KernelError> {
    params.validate()?;
    if f1.shape() != f2.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "csrm_forward",
            lhs: f1.shape(),
            rhs: f2.shape(),
        });
    }
    if f1.cols() != params.dim() {
        return Err(KernelError::ShapeMismatch {
            op: "csrm_forward",
            lhs: f1.shape(),
            rhs: (f1.rows(), params.dim()),
        });
    }
    let diff = feature_diff(f1, f2)?;
    let x1 = diff.hconcat(f1)?;
    let x2 = diff.hconcat(f2)?;
    let (c1, g1, out1) = branch_forward(&x1, &params.ctx_w1, &params.ctx_b1, &params.gate_w1, &params.gate_b1)?;
    let (c2, g2, out2) = branch_forward(&x2, &params.ctx_w2, &params.ctx_b2, &params.gate_w2, &params.gate_b2)?;
    let cache = CsrmCache {
        params: params.clone(),
        x1,
        x2,
        c1,
        c2,
        g1,
        g2,
    };
    Ok((out1, out2, cache))
}

struct BranchGrads {
    ctx_w: Matrix,
    ctx_b: Matrix,
    gate_w: Matrix,
    gate_b: Matrix,
    diff_part: Matrix,
    direct_part: Matrix,
}

fn branch_backward(
    upstream: &Matrix,
    x: &Matrix,
    ctx: &Matrix,
    gate: &Matrix,
    ctx_w: &Matrix,
    gate_w: &Matrix,
) -> Result<BranchGrads, KernelError> {
    let d_ctx = upstream.hadamard(gate)?;
    let d_gate = upstream.hadamard(ctx)?;
    // tanh' = 1 - c^2, sigmoid' = g (1 - g), both in terms of the activations
    let dz_ctx = d_ctx.hadamard(&ctx.map(|c| 1.0 - c * c))?;
    let dz_gate = d_gate.hadamard(&gate.map(|g| g * (1.0 - g)))?;
    let grad_ctx_w = dz_ctx.transpose().matmul(x)?;
    let grad_gate_w = dz_gate.transpose().matmul(x)?;
    let grad_ctx_b = dz_ctx.col_sums();
    let grad_gate_b = dz_gate.col_sums();
    let dx = dz_ctx.matmul(ctx_w)?.add(&dz_gate.matmul(gate_w)?)?;
    let (diff_part, direct_part) = dx.split_cols(x.cols() / 2);
    Ok(BranchGrads {
        ctx_w: grad_ctx_w,
        ctx_b: grad_ctx_b,
        gate_w: grad_gate_w,
        gate_b: grad_gate_b,
        diff_part,
        direct_part,
    })
}

/// Analytic gradients for [`csrm_forward`]. The shared difference block means
/// the first input receives the negated diff contribution on top of its
/// direct path, and the second receives the positive one.
pub fn csrm_backward(
    cache: &CsrmCache,
    upstream1: &Matrix,
    upstream2: &Matrix,
) -> Result<CsrmGradients, KernelError> {
    let n = cache.x1.rows();
    let d = cache.params.dim();
    for (up, tag) in [(upstream1, "upstream1"), (upstream2, "upstream2")] {
        if up.shape() != (n, d) {
            let _ = tag;
            return Err(KernelError::ShapeMismatch {
                op: "csrm_backward",
                lhs: (n, d),
                rhs: up.shape(),
            });
        }
    }
    let b1 = branch_backward(
        upstream1,
        &cache.x1,
        &cache.c1,
        &cache.g1,
        &cache.params.ctx_w1,
        &cache.params.gate_w1,
    )?;
    let b2 = branch_backward(
        upstream2,
        &cache.x2,
        &cache.c2,
        &cache.g2,
        &cache.params.ctx_w2,
        &cache.params.gate_w2,
    )?;
    let d_diff = b1.diff_part.add(&b2.diff_part)?;
    let f1 = b1.direct_part.sub(&d_diff)?;
    let f2 = b2.direct_part.add(&d_diff)?;
    Ok(CsrmGradients {
        f1,
        f2,
        params: CsrmParams {
            ctx_w1: b1.ctx_w,
            ctx_b1: b1.ctx_b,
            ctx_w2: b2.ctx_w,
            ctx_b2: b2.ctx_b,
            gate_w1: b1.gate_w,
            gate_b1: b1.gate_b,
            gate_w2: b2.gate_w,
            gate_b2: b2.gate_b,
        },
    })
}
