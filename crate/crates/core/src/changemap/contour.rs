//! Exterior boundary extraction via Moore-neighbor tracing.

use super::{ChangeMapError, Region};
use std::collections::{HashMap, HashSet};

/// Exterior boundary of one region, normalized to the unit square. Points are
/// ordered as a closed boundary walk; the first point is repeated implicitly,
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedContour {
    pub category: u8,
    pub points: Vec<(f64, f64)>,
}

// Moore neighborhood around a pixel, clockwise starting west (y grows down).
const MOORE: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Traces the exterior boundary walk of `region` (interior holes are
/// ignored), then normalizes each pixel as x/(w-1), y/(h-1) — a dimension of
/// one maps to 0.0 — and rounds to `decimals` places. Consecutive points that
/// collapse under rounding are dropped, as is a trailing repeat of the first
/// point.
pub fn contours_of(
    region: &Region,
    map_dims: (u32, u32),
    decimals: u32,
) -> Result<NormalizedContour, ChangeMapError> {
    let (width, height) = map_dims;
    for &(x, y) in &region.pixels {
        if x >= width || y >= height {
            return Err(ChangeMapError::RegionOutOfBounds {
                x,
                y,
                width,
                height,
            });
        }
    }

    let walk = boundary_walk(&region.pixels);
    let scale = 10f64.powi(decimals as i32);
    let norm = |v: u32, dim: u32| -> f64 {
        if dim > 1 {
            ((v as f64 / (dim - 1) as f64) * scale).round() / scale
        } else {
            0.0
        }
    };

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(walk.len());
    for (x, y) in walk {
        let p = (norm(x, width), norm(y, height));
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    // the walk is closed; drop trailing points that equal the start
    while points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    Ok(NormalizedContour {
        category: region.category,
        points,
    })
}

type TraceState = ((i64, i64), (i64, i64));

/// One Moore step: from the current pixel, scan the neighborhood clockwise
/// starting just past the backtrack cell; the first member pixel becomes the
/// new position and the cell examined right before it the new backtrack.
fn moore_step(members: &HashSet<(i64, i64)>, state: TraceState) -> TraceState {
    let (current, backtrack) = state;
    let back_idx = MOORE
        .iter()
        .position(|&(dx, dy)| (current.0 + dx, current.1 + dy) == backtrack)
        .expect("backtrack is a Moore neighbor");
    for step in 1..=8 {
        let idx = (back_idx + step) % 8;
        let cand = (current.0 + MOORE[idx].0, current.1 + MOORE[idx].1);
        if members.contains(&cand) {
            let prev_idx = (back_idx + step - 1) % 8;
            let prev = (current.0 + MOORE[prev_idx].0, current.1 + MOORE[prev_idx].1);
            return (cand, prev);
        }
    }
    unreachable!("connected region with area >= 2 always has a next boundary pixel")
}

/// Ordered exterior boundary pixels of a connected pixel set.
///
/// The deterministic Moore transition traces a closed orbit around the outer
/// boundary; the synthetic start state (topmost-leftmost pixel, entered from
/// the west) can be a transient for thin shapes, so the orbit is followed
/// until a (pixel, backtrack) state repeats and only the cycle is kept,
/// rotated to begin at the minimal (y, x) pixel.
fn boundary_walk(pixels: &[(u32, u32)]) -> Vec<(u32, u32)> {
    debug_assert!(!pixels.is_empty());
    if pixels.len() == 1 {
        return vec![pixels[0]];
    }
    let members: HashSet<(i64, i64)> = pixels
        .iter()
        .map(|&(x, y)| (x as i64, y as i64))
        .collect();
    // topmost then leftmost pixel; its west and whole upper row are outside
    let start = pixels
        .iter()
        .map(|&(x, y)| (x as i64, y as i64))
        .min_by_key(|&(x, y)| (y, x))
        .unwrap();

    let mut seen: HashMap<TraceState, usize> = HashMap::new();
    let mut trajectory: Vec<TraceState> = Vec::new();
    let mut state = (start, (start.0 - 1, start.1));
    let cycle_start = loop {
        if let Some(&i) = seen.get(&state) {
            break i;
        }
        seen.insert(state, trajectory.len());
        trajectory.push(state);
        state = moore_step(&members, state);
    };

    let cycle: Vec<(i64, i64)> = trajectory[cycle_start..].iter().map(|s| s.0).collect();
    let first = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &(x, y))| (y, x))
        .map(|(i, _)| i)
        .unwrap();
    cycle[first..]
        .iter()
        .chain(&cycle[..first])
        .map(|&(x, y)| (x as u32, y as u32))
        .collect()
}
