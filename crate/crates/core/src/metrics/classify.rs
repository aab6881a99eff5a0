//! Classification, counting, and localization metrics.

use std::collections::BTreeMap;

use crate::changemap::{CellSet, ALL_CELLS};

use super::MetricsError;

/// Accuracy, precision, recall, F1 with "changed" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Standard confusion-matrix metrics over (prediction, truth) pairs where
/// `true` means "changed". Precision and recall are 0 when their denominator
/// is 0.
pub fn binary_metrics(pairs: &[(bool, bool)]) -> Result<BinaryMetrics, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut tp, mut fp, mut fne, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for &(pred, truth) in pairs {
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics {
        accuracy: ratio(tp + tn, pairs.len()),
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Mean absolute error and root mean squared error over integer pairs.
pub fn count_metrics(pairs: &[(i64, i64)]) -> Result<CountMetrics, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = pairs.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &(pred, truth) in pairs {
        let delta = (pred - truth) as f64;
        abs_sum += delta.abs();
        sq_sum += delta * delta;
    }
    Ok(CountMetrics {
        mae: abs_sum / n,
        rmse: (sq_sum / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub jaccard: f64,
    pub subset_accuracy: f64,
}

/// Multi-label metrics over (predicted, true) cell sets: micro-averaged
/// precision/recall/F1 pooled over the nine labels across samples, mean
/// Jaccard similarity (1 when both sets are empty), and exact-match subset
/// accuracy.
pub fn localization_metrics(
    pairs: &[(CellSet, CellSet)],
) -> Result<LocalizationMetrics, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    let mut jaccard_sum = 0.0f64;
    let mut exact = 0usize;
    for (pred, truth) in pairs {
        for cell in ALL_CELLS {
            match (pred.contains(&cell), truth.contains(&cell)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
        }
        let union = pred.union(truth).count();
        let inter = pred.intersection(truth).count();
        jaccard_sum += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        if pred == truth {
            exact += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let n = pairs.len() as f64;
    Ok(LocalizationMetrics {
        precision,
        recall,
        f1,
        jaccard: jaccard_sum / n,
        subset_accuracy: exact as f64 / n,
    })
}

/// Convenience map form used by report assembly.
impl BinaryMetrics {
    pub fn to_map(self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("accuracy".to_string(), self.accuracy),
            ("precision".to_string(), self.precision),
            ("recall".to_string(), self.recall),
            ("f1".to_string(), self.f1),
        ])
    }
}
