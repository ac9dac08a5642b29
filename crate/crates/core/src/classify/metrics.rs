//! Confusion-matrix metrics and the geometric-mean aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores derived from a confusion matrix whose rows are true classes and
/// columns predicted classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

/// Counts `(truth, prediction)` pairs into a `n_classes × n_classes` matrix.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    hits as f64 / truth.len() as f64
}

/// Accuracy, per-class precision/recall/F1 and macro-F1. A ratio with a zero
/// denominator counts as 0.
pub fn metrics(confusion: &[Vec<u64>]) -> Result<Metrics> {
    let c = confusion.len();
    if c == 0 || confusion.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidMetric("confusion matrix must be square".into()));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidMetric("confusion matrix is all zeros".into()));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let trace: u64 = (0..c).map(|k| confusion[k][k]).sum();

    let mut precision = Vec::with_capacity(c);
    let mut recall = Vec::with_capacity(c);
    let mut f1 = Vec::with_capacity(c);
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
        let actual: u64 = confusion[k].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let macro_f1 = f1.iter().sum::<f64>() / c as f64;
    Ok(Metrics {
        accuracy: ratio(trace, total),
        macro_f1,
        precision,
        recall,
        f1,
    })
}

/// `exp(mean(ln v))`; every value must be positive.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidMetric("geometric mean of nothing".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidMetric(format!(
            "geometric mean needs positive values, got {bad}"
        )));
    }
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    Ok(mean_log.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_by_two_hand_computed() {
        // class 0: P = 2/3, R = 1 -> F1 = 0.8; class 1: P = 1, R = 1/2 -> F1 = 2/3.
        let m = metrics(&[vec![2, 0], vec![1, 1]]).unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.75);
        assert_abs_diff_eq!(m.f1[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(m.f1[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_f1, (0.8 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_f1, 0.7333, epsilon = 1e-4);
    }

    #[test]
    fn diagonal_is_perfect() {
        let m = metrics(&[vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 5]]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn total_confusion() {
        let m = metrics(&[vec![0, 4], vec![4, 0]]).unwrap();
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.macro_f1, 0.0);
    }

    #[test]
    fn zero_denominators_give_zero() {
        // Nothing is ever predicted as class 1.
        let m = metrics(&[vec![2, 0], vec![2, 0]]).unwrap();
        assert_eq!(m.precision[1], 0.0);
        assert_eq!(m.f1[1], 0.0);
    }

    #[test]
    fn invalid_confusions() {
        assert!(metrics(&[vec![0, 0], vec![0, 0]]).is_err());
        assert!(metrics(&[]).is_err());
        assert!(metrics(&[vec![1, 0]]).is_err());
    }

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        assert_eq!(m, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]), 0.75);
    }

    #[test]
    fn geometric_means() {
        assert_abs_diff_eq!(geometric_mean(&[0.8, 0.8]).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(geometric_mean(&[0.64, 1.0]).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(geometric_mean(&[0.37]).unwrap(), 0.37, epsilon = 1e-15);
        assert!(geometric_mean(&[0.5, 0.0]).is_err());
        assert!(geometric_mean(&[-0.1]).is_err());
        assert!(geometric_mean(&[]).is_err());
    }
}
