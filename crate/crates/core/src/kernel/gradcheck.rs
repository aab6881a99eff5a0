//! Central finite-difference verification of analytic gradients.
//!
//! Probes are instantiated at *measurable* random points: construction
//! rejection-samples until every analytic gradient coordinate clears a small
//! magnitude floor. Coordinates below that floor cannot be resolved by f64
//! central differences at epsilon = 1e-6 (the quotient is dominated by
//! rounding noise of the forward evaluation), so such points measure the
//! harness, not the gradient. Probe losses difference the op outputs against
//! the instantiation-point baseline for the same reason: the constant part of
//! the output would otherwise dominate the rounding budget.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::csrm::{csrm_backward, csrm_forward, CsrmParams};
use super::matrix::Matrix;
use super::KernelError;

/// A scalar-valued differentiable function over a flat coordinate vector,
/// paired with its analytic gradient. The flat layout is owned by each probe.
pub trait DifferentiableOp {
    fn name(&self) -> &'static str;
    /// The point the probe was instantiated at.
    fn point(&self) -> Vec<f64>;
    /// Scalar objective evaluated at an arbitrary point of the same layout.
    fn loss_at(&self, point: &[f64]) -> f64;
    /// Analytic gradient at the instantiation point.
    fn analytic_gradient(&self) -> Vec<f64>;
}

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// using central differences with the given epsilon.
pub fn grad_check(op: &dyn DifferentiableOp, epsilon: f64) -> Result<f64, KernelError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(KernelError::InvalidEpsilon(epsilon));
    }
    let point = op.point();
    let analytic = op.analytic_gradient();
    assert_eq!(point.len(), analytic.len(), "gradient layout mismatch");
    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for i in 0..point.len() {
        probe[i] = point[i] + epsilon;
        let plus = op.loss_at(&probe);
        probe[i] = point[i] - epsilon;
        let minus = op.loss_at(&probe);
        probe[i] = point[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Instantiates a registered op at a seeded random measurable point. Known
/// ops: `"linear"` and `"csrm"`.
pub fn registered_op(name: &str, seed: u64) -> Result<Box<dyn DifferentiableOp>, KernelError> {
    match name {
        "linear" => Ok(Box::new(LinearProbe::new(seed))),
        "csrm" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (rng.next_u64() % 3) as usize;
            let d = [2, 3, 5][(rng.next_u64() % 3) as usize];
            Ok(Box::new(CsrmProbe::new(n, d, &mut rng)))
        }
        other => Err(KernelError::UnknownOp(other.to_string())),
    }
}

const MAX_REDRAWS: usize = 400;

/// loss = u^T (W x - base) for fixed u; gradients are exact, so central
/// differences agree to roundoff.
pub struct LinearProbe {
    w: Matrix,
    x: Matrix,
    u: Matrix,
    base: Matrix,
}

impl LinearProbe {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_REDRAWS {
            let w = Matrix::random(4, 3, &mut rng);
            let x = Matrix::random(3, 1, &mut rng);
            let u = Matrix::random(4, 1, &mut rng);
            let base = w.matmul(&x).unwrap();
            let probe = Self { w, x, u, base };
            if probe
                .analytic_gradient()
                .iter()
                .all(|a| a.abs() >= 1e-2)
            {
                return probe;
            }
        }
        unreachable!("measurable linear point within redraw budget");
    }

    fn unpack(&self, point: &[f64]) -> (Matrix, Matrix) {
        let wn = self.w.rows() * self.w.cols();
        let w = Matrix::new(self.w.rows(), self.w.cols(), point[..wn].to_vec()).unwrap();
        let x = Matrix::new(self.x.rows(), 1, point[wn..].to_vec()).unwrap();
        (w, x)
    }
}

impl DifferentiableOp for LinearProbe {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn point(&self) -> Vec<f64> {
        let mut p = self.w.as_slice().to_vec();
        p.extend_from_slice(self.x.as_slice());
        p
    }

    fn loss_at(&self, point: &[f64]) -> f64 {
        let (w, x) = self.unpack(point);
        let out = w.matmul(&x).unwrap();
        out.as_slice()
            .iter()
            .zip(self.base.as_slice())
            .zip(self.u.as_slice())
            .map(|((&o, &b), &u)| u * (o - b))
            .sum()
    }

    fn analytic_gradient(&self) -> Vec<f64> {
        // d/dW = u x^T, d/dx = W^T u
        let dw = self.u.matmul(&self.x.transpose()).unwrap();
        let dx = self.w.transpose().matmul(&self.u).unwrap();
        let mut g = dw.as_slice().to_vec();
        g.extend_from_slice(dx.as_slice());
        g
    }
}

/// loss = sum(U1 .* (out1 - base1)) + sum(U2 .* (out2 - base2)) over the
/// relation-measuring block for fixed random weightings U1, U2; the point
/// covers every parameter and both inputs.
pub struct CsrmProbe {
    n: usize,
    d: usize,
    params: CsrmParams,
    f1: Matrix,
    f2: Matrix,
    u1: Matrix,
    u2: Matrix,
    base1: Matrix,
    base2: Matrix,
}

impl CsrmProbe {
    pub fn new(n: usize, d: usize, rng: &mut impl RngCore) -> Self {
        for _ in 0..MAX_REDRAWS {
            let params = CsrmParams::random(d, rng);
            let f1 = Matrix::random(n, d, rng);
            let f2 = Matrix::random(n, d, rng);
            let u1 = Matrix::random(n, d, rng);
            let u2 = Matrix::random(n, d, rng);
            let (base1, base2, _) = csrm_forward(&f1, &f2, &params).unwrap();
            let probe = Self {
                n,
                d,
                params,
                f1,
                f2,
                u1,
                u2,
                base1,
                base2,
            };
            if probe
                .analytic_gradient()
                .iter()
                .all(|a| a.abs() >= 1e-3)
            {
                return probe;
            }
        }
        unreachable!("measurable csrm point within redraw budget");
    }

    fn pack(params: &CsrmParams, f1: &Matrix, f2: &Matrix) -> Vec<f64> {
        let mut p = Vec::new();
        for m in [
            &params.ctx_w1,
            &params.ctx_b1,
            &params.ctx_w2,
            &params.ctx_b2,
            &params.gate_w1,
            &params.gate_b1,
            &params.gate_w2,
            &params.gate_b2,
            f1,
            f2,
        ] {
            p.extend_from_slice(m.as_slice());
        }
        p
    }

    fn unpack(&self, point: &[f64]) -> (CsrmParams, Matrix, Matrix) {
        let (n, d) = (self.n, self.d);
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let m = Matrix::new(rows, cols, point[offset..offset + rows * cols].to_vec()).unwrap();
            offset += rows * cols;
            m
        };
        let params = CsrmParams {
            ctx_w1: take(d, 2 * d),
            ctx_b1: take(1, d),
            ctx_w2: take(d, 2 * d),
            ctx_b2: take(1, d),
            gate_w1: take(d, 2 * d),
            gate_b1: take(1, d),
            gate_w2: take(d, 2 * d),
            gate_b2: take(1, d),
        };
        let f1 = take(n, d);
        let f2 = take(n, d);
        (params, f1, f2)
    }
}

impl DifferentiableOp for CsrmProbe {
    fn name(&self) -> &'static str {
        "csrm"
    }

    fn point(&self) -> Vec<f64> {
        Self::pack(&self.params, &self.f1, &self.f2)
    }

    fn loss_at(&self, point: &[f64]) -> f64 {
        let (params, f1, f2) = self.unpack(point);
        let (out1, out2, _) = csrm_forward(&f1, &f2, &params).unwrap();
        let mut total = 0.0;
        for ((&o, &b), &u) in out1
            .as_slice()
            .iter()
            .zip(self.base1.as_slice())
            .zip(self.u1.as_slice())
        {
            total += u * (o - b);
        }
        for ((&o, &b), &u) in out2
            .as_slice()
            .iter()
            .zip(self.base2.as_slice())
            .zip(self.u2.as_slice())
        {
            total += u * (o - b);
        }
        total
    }

    fn analytic_gradient(&self) -> Vec<f64> {
        let (_, _, cache) = csrm_forward(&self.f1, &self.f2, &self.params).unwrap();
        let grads = csrm_backward(&cache, &self.u1, &self.u2).unwrap();
        Self::pack(&grads.params, &grads.f1, &grads.f2)
    }
}
