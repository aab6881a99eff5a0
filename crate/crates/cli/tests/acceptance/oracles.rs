//! Brute-force reference implementations used only by the acceptance suite.
//! Shares no code with the library: counting is breadth-first over a visited
//! grid, the grid rule recomputes block bounds from scratch, and the kernel
//! oracles are direct scalar transcriptions of the formulas.

use std::collections::VecDeque;

/// Connected components of `category` with at least `min_area` pixels, BFS
/// over either 4- or 8-neighborhoods.
pub fn flood_fill_count(
    width: usize,
    height: usize,
    labels: &[u8],
    category: u8,
    eight_connected: bool,
    min_area: usize,
) -> usize {
    let mut visited = vec![false; labels.len()];
    let mut count = 0usize;
    let offsets: &[(i64, i64)] = if eight_connected {
        &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ]
    } else {
        &[(1, 0), (-1, 0), (0, 1), (0, -1)]
    };
    for start in 0..labels.len() {
        if visited[start] || labels[start] != category {
            continue;
        }
        let mut area = 0usize;
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(idx) = queue.pop_front() {
            area += 1;
            let (x, y) = ((idx % width) as i64, (idx / width) as i64);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let nidx = ny as usize * width + nx as usize;
                if !visited[nidx] && labels[nidx] == category {
                    visited[nidx] = true;
                    queue.push_back(nidx);
                }
            }
        }
        if area >= min_area {
            count += 1;
        }
    }
    count
}

/// Cell indices (row * 3 + col) whose fraction of `category` pixels strictly
/// exceeds `threshold` under the floor-boundary 3x3 partition.
pub fn grid_fraction_cells(
    width: usize,
    height: usize,
    labels: &[u8],
    category: u8,
    threshold: f64,
) -> Vec<usize> {
    let mut out = Vec::new();
    for row in 0..3usize {
        let y0 = row * height / 3;
        let y1 = (row + 1) * height / 3;
        for col in 0..3usize {
            let x0 = col * width / 3;
            let x1 = (col + 1) * width / 3;
            let mut hits = 0usize;
            let mut total = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    total += 1;
                    if labels[y * width + x] == category {
                        hits += 1;
                    }
                }
            }
            if total > 0 && hits as f64 / total as f64 > threshold {
                out.push(row * 3 + col);
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub struct CsrmScalarInputs<'a> {
    pub n: usize,
    pub d: usize,
    pub f1: &'a [f64],
    pub f2: &'a [f64],
    /// Eight parameter blocks in order: ctx_w1, ctx_b1, ctx_w2, ctx_b2,
    /// gate_w1, gate_b1, gate_w2, gate_b2 (weights D x 2D, biases D).
    pub weights: [&'a [f64]; 8],
}

/// Straight-line recomputation of both branch outputs.
pub fn csrm_scalar(inputs: &CsrmScalarInputs) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (inputs.n, inputs.d);
    let [cw1, cb1, cw2, cb2, gw1, gb1, gw2, gb2] = inputs.weights;
    let mut out1 = vec![0.0; n * d];
    let mut out2 = vec![0.0; n * d];
    for r in 0..n {
        for j in 0..d {
            let mut zc1 = cb1[j];
            let mut zg1 = gb1[j];
            let mut zc2 = cb2[j];
            let mut zg2 = gb2[j];
            for k in 0..2 * d {
                let (x1, x2) = if k < d {
                    let diff = inputs.f2[r * d + k] - inputs.f1[r * d + k];
                    (diff, diff)
                } else {
                    (inputs.f1[r * d + (k - d)], inputs.f2[r * d + (k - d)])
                };
                zc1 += cw1[j * 2 * d + k] * x1;
                zg1 += gw1[j * 2 * d + k] * x1;
                zc2 += cw2[j * 2 * d + k] * x2;
                zg2 += gw2[j * 2 * d + k] * x2;
            }
            out1[r * d + j] = zc1.tanh() * sigmoid(zg1);
            out2[r * d + j] = zc2.tanh() * sigmoid(zg2);
        }
    }
    (out1, out2)
}

/// Scalar scaled-dot-product attention: q is (rows x d), k/v are (m x d).
pub fn attention_scalar(
    rows: usize,
    m: usize,
    d: usize,
    q: &[f64],
    k: &[f64],
    v: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    for i in 0..rows {
        let mut scores = vec![0.0; m];
        for (j, s) in scores.iter_mut().enumerate() {
            for c in 0..d {
                *s += q[i * d + c] * k[j * d + c];
            }
            *s /= (d as f64).sqrt();
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for c in 0..d {
            let mut acc = 0.0;
            for j in 0..m {
                acc += exps[j] / z * v[j * d + c];
            }
            out[i * d + c] = acc;
        }
    }
    out
}

/// Per-token scalar cross entropy over explicit probability rows.
pub fn cross_entropy_scalar(rows: usize, classes: usize, probs: &[f64], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        total -= probs[r * classes + t].ln();
    }
    let _ = rows;
    total / targets.len() as f64
}
