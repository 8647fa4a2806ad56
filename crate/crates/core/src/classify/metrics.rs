use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Macro F1 averages over classes present in `truth`; weighted F1 weights
/// by truth support. `0/0` is taken as 0 throughout.
pub fn compute_metrics(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<MetricsReport> {
    if truth.len() != pred.len() {
        return Err(Error::dims("predictions", truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("compute_metrics"));
    }
    let k = truth
        .iter()
        .chain(pred)
        .max()
        .map_or(0, |m| m + 1)
        .max(num_classes);
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..k).map(|t| confusion[t][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let n = truth.len();
    let correct = (0..k).map(|c| confusion[c][c]).sum();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let macro_f1 = present.iter().map(|m| m.f1).sum::<f64>() / present.len() as f64;
    let weighted_f1 = present
        .iter()
        .map(|m| m.f1 * m.support as f64)
        .sum::<f64>()
        / n as f64;
    Ok(MetricsReport {
        accuracy: ratio(correct, n),
        macro_f1,
        weighted_f1,
        per_class,
        confusion,
    })
}
