//! Self-contained property suite behind the `kernel-check` subcommand.
//!
//! Each entry re-derives an expected value through a scalar straight-line
//! route (or finite differences) and reports the worst deviation observed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::csrm::{csrm_forward, CsrmParams};
use super::gradcheck::{grad_check, registered_op, CsrmProbe};
use super::loss::cross_entropy;
use super::matrix::Matrix;
use super::qformer::{feature_diff, qformer_forward, QFormerParams};
use super::{attention_forward, softmax_rows};

/// Deviation tolerance for exact-arithmetic oracle comparisons.
pub const ORACLE_TOLERANCE: f64 = 1e-12;
/// Default tolerance for finite-difference gradient checks.
pub const DEFAULT_GRAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub op: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub grad_tolerance: f64,
    pub checks: Vec<CheckEntry>,
    pub pass: bool,
}

impl CheckReport {
    fn push(&mut self, op: &str, max_rel_error: f64, tolerance: f64) {
        let pass = max_rel_error <= tolerance;
        self.pass &= pass;
        self.checks.push(CheckEntry {
            op: op.to_string(),
            max_rel_error,
            tolerance,
            pass,
        });
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_shapes(rng: &mut impl RngCore) -> (usize, usize) {
    let n = 1 + (rng.next_u64() % 3) as usize;
    let d = [2, 3, 5][(rng.next_u64() % 3) as usize];
    (n, d)
}

/// Runs every kernel property and oracle comparison. `grad_tolerance` bounds
/// the finite-difference entries; exact oracle entries are held to 1e-12.
pub fn run_check_suite(seed: u64, grad_tolerance: f64) -> CheckReport {
    let mut report = CheckReport {
        seed,
        grad_tolerance,
        checks: Vec::new(),
        pass: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // feature_diff vs an elementwise loop, plus antisymmetry
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (n, d) = random_shapes(&mut rng);
        let a = Matrix::random(n, d, &mut rng);
        let b = Matrix::random(n, d, &mut rng);
        let diff = feature_diff(&a, &b).unwrap();
        let neg = feature_diff(&b, &a).unwrap();
        for r in 0..n {
            for c in 0..d {
                worst = worst.max((diff.get(r, c) - (b.get(r, c) - a.get(r, c))).abs());
                worst = worst.max((diff.get(r, c) + neg.get(r, c)).abs());
            }
        }
    }
    report.push("feature_diff/oracle", worst, ORACLE_TOLERANCE);

    // csrm_forward vs scalar recomputation; also the range invariants
    let mut worst_forward = 0.0f64;
    let mut worst_range = 0.0f64;
    for _ in 0..10 {
        let (n, d) = random_shapes(&mut rng);
        let f1 = Matrix::random(n, d, &mut rng);
        let f2 = Matrix::random(n, d, &mut rng);
        let params = CsrmParams::random(d, &mut rng);
        let (out1, out2, _) = csrm_forward(&f1, &f2, &params).unwrap();
        let (exp1, exp2) = csrm_scalar_oracle(&f1, &f2, &params);
        worst_forward = worst_forward.max(max_abs_diff(out1.as_slice(), &exp1));
        worst_forward = worst_forward.max(max_abs_diff(out2.as_slice(), &exp2));
        for &v in out1.as_slice().iter().chain(out2.as_slice()) {
            // gates and contexts are bounded, so |out| < 1; report any overshoot
            worst_range = worst_range.max((v.abs() - 1.0).max(0.0));
        }
    }
    report.push("csrm_forward/oracle", worst_forward, ORACLE_TOLERANCE);
    report.push("csrm_forward/output_range", worst_range, ORACLE_TOLERANCE);

    // csrm analytic gradients vs central differences at 20 random points
    let mut worst_grad = 0.0f64;
    for k in 0..20 {
        let mut point_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + k));
        let (n, d) = random_shapes(&mut point_rng);
        let probe = CsrmProbe::new(n, d, &mut point_rng);
        worst_grad = worst_grad.max(grad_check(&probe, 1e-6).unwrap());
    }
    report.push("csrm_backward/grad_check", worst_grad, grad_tolerance);

    // the exact linear case as a reference point for the harness itself
    let linear = registered_op("linear", seed ^ 0x5eed).unwrap();
    let linear_err = grad_check(linear.as_ref(), 1e-6).unwrap();
    report.push("linear/grad_check", linear_err, grad_tolerance);

    // softmax row normalization
    let mut worst_softmax = 0.0f64;
    for _ in 0..10 {
        let (n, d) = random_shapes(&mut rng);
        let m = Matrix::random(n, d, &mut rng).scale(25.0);
        let s = softmax_rows(&m);
        for r in 0..n {
            let sum: f64 = s.row(r).iter().sum();
            worst_softmax = worst_softmax.max((sum - 1.0).abs());
        }
    }
    report.push("softmax_rows/row_sums", worst_softmax, ORACLE_TOLERANCE);

    // attention vs scalar oracle and the convex-combination envelope
    let mut worst_attn = 0.0f64;
    let mut worst_envelope = 0.0f64;
    for _ in 0..10 {
        let (n, d) = random_shapes(&mut rng);
        let m = 1 + (rng.next_u64() % 4) as usize;
        let q = Matrix::random(n, d, &mut rng);
        let k = Matrix::random(m, d, &mut rng);
        let v = Matrix::random(m, d, &mut rng);
        let out = attention_forward(&q, &k, &v).unwrap();
        let expected = attention_scalar_oracle(&q, &k, &v);
        worst_attn = worst_attn.max(max_abs_diff(out.as_slice(), &expected));
        for c in 0..v.cols() {
            let lo = (0..m).map(|r| v.get(r, c)).fold(f64::INFINITY, f64::min);
            let hi = (0..m).map(|r| v.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
            for r in 0..n {
                let val = out.get(r, c);
                worst_envelope = worst_envelope.max((lo - val).max(0.0)).max((val - hi).max(0.0));
            }
        }
    }
    report.push("attention_forward/oracle", worst_attn, ORACLE_TOLERANCE);
    report.push("attention_forward/convexity", worst_envelope, ORACLE_TOLERANCE);

    // qformer permutation invariance over the visual key set
    let mut worst_perm = 0.0f64;
    for _ in 0..5 {
        let (n, vis_d) = random_shapes(&mut rng);
        let d = 3;
        let f1 = Matrix::random(n, vis_d, &mut rng);
        let f2 = Matrix::random(n, vis_d, &mut rng);
        let prompt = Matrix::random(2, d, &mut rng);
        let params = QFormerParams::random(4, d, vis_d, 5, &mut rng);
        let base = qformer_forward(&f1, &f2, &prompt, &params).unwrap();
        let swapped = qformer_forward(&f2, &f1, &prompt, &params).unwrap();
        worst_perm = worst_perm.max(max_abs_diff(base.as_slice(), swapped.as_slice()));
    }
    report.push("qformer_forward/permutation", worst_perm, ORACLE_TOLERANCE);

    // cross-entropy vs a per-token scalar loop
    let mut worst_xent = 0.0f64;
    for _ in 0..10 {
        let (n, v) = random_shapes(&mut rng);
        let raw = Matrix::random(n, v, &mut rng).map(|x| (2.0 * x).exp());
        let probs = Matrix::from_fn(n, v, |r, c| {
            let sum: f64 = raw.row(r).iter().sum();
            raw.get(r, c) / sum
        });
        let targets: Vec<usize> = (0..n).map(|_| (rng.next_u64() as usize) % v).collect();
        let loss = cross_entropy(&probs, &targets).unwrap();
        let mut expected = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            expected -= probs.get(r, t).ln();
        }
        expected /= targets.len() as f64;
        worst_xent = worst_xent.max((loss - expected).abs());
    }
    report.push("cross_entropy/oracle", worst_xent, ORACLE_TOLERANCE);

    report
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn csrm_scalar_oracle(f1: &Matrix, f2: &Matrix, p: &CsrmParams) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = f1.shape();
    let mut out1 = vec![0.0; n * d];
    let mut out2 = vec![0.0; n * d];
    for r in 0..n {
        for j in 0..d {
            let mut zc1 = p.ctx_b1.get(0, j);
            let mut zg1 = p.gate_b1.get(0, j);
            let mut zc2 = p.ctx_b2.get(0, j);
            let mut zg2 = p.gate_b2.get(0, j);
            for k in 0..2 * d {
                let (x1, x2) = if k < d {
                    let diff = f2.get(r, k) - f1.get(r, k);
                    (diff, diff)
                } else {
                    (f1.get(r, k - d), f2.get(r, k - d))
                };
                zc1 += p.ctx_w1.get(j, k) * x1;
                zg1 += p.gate_w1.get(j, k) * x1;
                zc2 += p.ctx_w2.get(j, k) * x2;
                zg2 += p.gate_w2.get(j, k) * x2;
            }
            out1[r * d + j] = sigmoid(zg1) * zc1.tanh();
            out2[r * d + j] = sigmoid(zg2) * zc2.tanh();
        }
    }
    (out1, out2)
}

fn attention_scalar_oracle(q: &Matrix, k: &Matrix, v: &Matrix) -> Vec<f64> {
    let scale = (q.cols() as f64).sqrt();
    let mut out = vec![0.0; q.rows() * v.cols()];
    for i in 0..q.rows() {
        let mut scores = vec![0.0; k.rows()];
        for (j, s) in scores.iter_mut().enumerate() {
            for c in 0..q.cols() {
                *s += q.get(i, c) * k.get(j, c);
            }
            *s /= scale;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for c in 0..v.cols() {
            let mut acc = 0.0;
            for (j, &e) in exps.iter().enumerate() {
                acc += e / total * v.get(j, c);
            }
            out[i * v.cols() + c] = acc;
        }
    }
    out
}
