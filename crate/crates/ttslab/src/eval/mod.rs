//! Evaluation utilities: 2-D projections of signal sets, fusion-map
//! histograms, classification metrics, and the downstream case study.

pub mod classifier;
pub mod fusion;
pub mod projection;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::SignalSet;

/// Flattens each sample to a feature row `(N, C * W)`.
pub fn flatten_features(set: &SignalSet) -> Vec<Vec<f64>> {
    let (n, c, w) = (set.n(), set.channels(), set.width());
    (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(c * w);
            for ch in 0..c {
                for t in 0..w {
                    row.push(set.values[[i, ch, 0, t]] as f64);
                }
            }
            row
        })
        .collect()
}

/// Row-count x row-count confusion matrix and the scores derived from it.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationMetrics {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

/// Computes the confusion matrix and derived scores. Undefined ratios
/// (empty row/column) count as zero.
pub fn classification_metrics(
    truth: &[u32],
    predicted: &[u32],
    num_classes: usize,
) -> Result<ClassificationMetrics> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::Usage("metrics need equal, nonempty label vectors".into()));
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= num_classes || p as usize >= num_classes {
            return Err(Error::Usage(format!("label out of range: true {t}, predicted {p}")));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let total: u64 = truth.len() as u64;
    let correct: u64 = (0..num_classes).map(|k| confusion[k][k]).sum();
    let accuracy = correct as f64 / total as f64;

    let mut precision = Vec::with_capacity(num_classes);
    let mut recall = Vec::with_capacity(num_classes);
    let mut f1 = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let tp = confusion[k][k] as f64;
        let pred_k: f64 = (0..num_classes).map(|t| confusion[t][k] as f64).sum();
        let true_k: f64 = confusion[k].iter().map(|&v| v as f64).sum();
        let p = if pred_k > 0.0 { tp / pred_k } else { 0.0 };
        let r = if true_k > 0.0 { tp / true_k } else { 0.0 };
        precision.push(p);
        recall.push(r);
        f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
    let macro_f1 = f1.iter().sum::<f64>() / num_classes as f64;
    Ok(ClassificationMetrics {
        confusion,
        accuracy,
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        macro_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn metrics_hand_computed_oracle() {
        // confusion = [[2, 1], [1, 3]] by construction.
        let truth = [0, 0, 0, 1, 1, 1, 1];
        let pred = [0, 0, 1, 0, 1, 1, 1];
        let m = classification_metrics(&truth, &pred, 2).unwrap();
        assert_eq!(m.confusion, vec![vec![2, 1], vec![1, 3]]);
        assert_abs_diff_eq!(m.accuracy, 5.0 / 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.per_class_precision[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.per_class_precision[1], 3.0 / 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.per_class_recall[0], 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.per_class_recall[1], 3.0 / 4.0, epsilon = 1e-9);
        let f0 = 2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0);
        let f1 = 2.0 * (3.0 / 4.0) * (3.0 / 4.0) / (3.0 / 2.0);
        assert_abs_diff_eq!(m.per_class_f1[0], f0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.per_class_f1[1], f1, epsilon = 1e-9);
        assert_abs_diff_eq!(m.macro_f1, (f0 + f1) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn metrics_empty_class_yields_zero_scores() {
        let truth = [0, 0];
        let pred = [0, 0];
        let m = classification_metrics(&truth, &pred, 2).unwrap();
        assert_eq!(m.per_class_precision[1], 0.0);
        assert_eq!(m.per_class_recall[1], 0.0);
        assert_eq!(m.per_class_f1[1], 0.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn metrics_rejects_bad_input() {
        assert!(classification_metrics(&[0], &[0, 1], 2).is_err());
        assert!(classification_metrics(&[5], &[0], 2).is_err());
    }
}
