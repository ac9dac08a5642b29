//! Multinomial logistic regression with an L2 penalty, trained by full-batch
//! gradient descent with a backtracking (Armijo) line search.
//!
//! The objective for `n` rows and inverse regularization strength `C` is
//!
//! ```text
//! L(W, b) = (1/n) Σ_i −log softmax(W x_i + b)[y_i]  +  ‖W‖² / (2 C n)
//! ```
//!
//! Biases are not penalized. Parameters start at zero, so training is
//! deterministic and the seed argument has no effect.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stop once the largest gradient entry is at most this.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 2000;

const ARMIJO: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// One row of weights per class.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    /// Inverse regularization strength `C`.
    pub reg_strength: f64,
}

/// Optimizer history of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegTrace {
    /// Objective value at the start of every iteration, plus the final one.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl LogRegModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Affine class scores, one row per input.
    pub fn scores(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: features.ncols(),
            });
        }
        Ok(features.dot(&self.weights.t()) + &self.biases)
    }

    /// Class probabilities; each row sums to 1.
    pub fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut scores = self.scores(features)?;
        for mut row in scores.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
        }
        Ok(scores)
    }

    /// Most probable class per row; ties go to the lower class index.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self
            .scores(features)?
            .rows()
            .into_iter()
            .map(|row| argmax(row))
            .collect())
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Free-function form of [`LogRegModel::predict_proba`].
pub fn predict_proba(model: &LogRegModel, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    model.predict_proba(features)
}

fn penalty(weights: ArrayView2<'_, f64>, c: f64, n: usize) -> f64 {
    weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * c * n as f64)
}

fn scores_of(weights: ArrayView2<'_, f64>, biases: ArrayView1<'_, f64>, x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.dot(&weights.t()) + biases
}

/// Objective value only.
pub fn loss(
    weights: ArrayView2<'_, f64>,
    biases: ArrayView1<'_, f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    c: f64,
) -> f64 {
    let n = labels.len();
    let scores = scores_of(weights, biases, features);
    let mut total = 0.0;
    for (row, &y) in scores.rows().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / n as f64 + penalty(weights, c, n)
}

/// Objective value with its gradient with respect to weights and biases.
pub fn loss_and_gradient(
    weights: ArrayView2<'_, f64>,
    biases: ArrayView1<'_, f64>,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    c: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = labels.len();
    let nf = n as f64;
    let mut residual = scores_of(weights, biases, features);
    let mut total = 0.0;
    for (mut row, &y) in residual.rows_mut().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
        row.mapv_inplace(|v| (v - lse).exp());
        row[y] -= 1.0;
    }
    let grad_w = residual.t().dot(&features) / nf + &weights.mapv(|w| w / (c * nf));
    let grad_b = residual.sum_axis(Axis(0)) / nf;
    (total / nf + penalty(weights, c, n), grad_w, grad_b)
}

fn validate(features: ArrayView2<'_, f64>, labels: &[usize], c: f64) -> Result<usize> {
    if features.nrows() != labels.len() {
        return Err(Error::InvalidTraining(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::InvalidTraining("need at least 2 rows".into()));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidTraining(format!("C must be positive, got {c}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTraining("non-finite feature".into()));
    }
    let n_classes = labels.iter().max().expect("non-empty") + 1;
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::InvalidTraining("only one class present".into()));
    }
    Ok(n_classes)
}

/// Trains a model; the class count is one more than the largest label.
pub fn train_logreg(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    c: f64,
    seed: u64,
) -> Result<LogRegModel> {
    fit_logreg(features, labels, c, seed).map(|(model, _)| model)
}

/// [`train_logreg`] that also returns the optimizer trace.
pub fn fit_logreg(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    c: f64,
    _seed: u64,
) -> Result<(LogRegModel, LogRegTrace)> {
    let n_classes = validate(features, labels, c)?;
    let dim = features.ncols();
    let mut weights = Array2::<f64>::zeros((n_classes, dim));
    let mut biases = Array1::<f64>::zeros(n_classes);
    let mut step = 1.0;
    let mut losses = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (mut value, mut grad_w, mut grad_b) =
        loss_and_gradient(weights.view(), biases.view(), features, labels, c);
    let mut grad_norm = max_abs(&grad_w, &grad_b);
    while iterations < MAX_ITERATIONS {
        losses.push(value);
        if grad_norm <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let grad_sq = grad_w.iter().chain(&grad_b).map(|g| g * g).sum::<f64>();
        // Try a longer step than last time, then backtrack.
        step *= 2.0;
        let accepted = loop {
            let w = &weights - &(&grad_w * step);
            let b = &biases - &(&grad_b * step);
            let candidate = loss(w.view(), b.view(), features, labels, c);
            if candidate <= value - ARMIJO * step * grad_sq {
                break Some((w, b));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        iterations += 1;
        let Some((w, b)) = accepted else {
            // No descent possible at machine precision.
            break;
        };
        weights = w;
        biases = b;
        (value, grad_w, grad_b) = loss_and_gradient(weights.view(), biases.view(), features, labels, c);
        grad_norm = max_abs(&grad_w, &grad_b);
    }
    if losses.last() != Some(&value) {
        losses.push(value);
    }
    converged |= grad_norm <= GRADIENT_TOLERANCE;
    Ok((
        LogRegModel {
            weights,
            biases,
            reg_strength: c,
        },
        LogRegTrace {
            losses,
            iterations,
            converged,
            gradient_norm: grad_norm,
        },
    ))
}

fn max_abs(gw: &Array2<f64>, gb: &Array1<f64>) -> f64 {
    gw.iter().chain(gb).fold(0.0_f64, |m, g| m.max(g.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_one_dimensional() {
        let x = array![[-1.0], [1.0]];
        let model = train_logreg(x.view(), &[0, 1], 1.0, 0).unwrap();
        assert_eq!(model.predict(x.view()).unwrap(), vec![0, 1]);
        let p = model.predict_proba(array![[1.0]].view()).unwrap();
        assert!(p[[0, 1]] > 0.5);
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = LogRegModel {
            weights: Array2::zeros((2, 3)),
            biases: Array1::zeros(2),
            reg_strength: 1.0,
        };
        let p = model.predict_proba(array![[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]].view()).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn probabilities_sharpen_with_scale() {
        let make = |scale: f64| LogRegModel {
            weights: array![[-scale], [scale]],
            biases: Array1::zeros(2),
            reg_strength: 1.0,
        };
        let x = array![[0.5]];
        let p1 = make(1.0).predict_proba(x.view()).unwrap()[[0, 1]];
        let p10 = make(10.0).predict_proba(x.view()).unwrap()[[0, 1]];
        assert!(p1 > 0.5 && p10 > p1 && p10 < 1.0 + 1e-15);
    }

    #[test]
    fn rows_sum_to_one() {
        let model = LogRegModel {
            weights: array![[1.0, -3.0], [0.5, 2.0], [-7.0, 0.1]],
            biases: array![0.3, -0.2, 5.0],
            reg_strength: 1.0,
        };
        let x = array![[1.0, 2.0], [-40.0, 3.0], [100.0, -100.0]];
        for row in model.predict_proba(x.view()).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = train_logreg(array![[-1.0], [1.0]].view(), &[0, 1], 1.0, 0).unwrap();
        assert!(matches!(
            model.predict_proba(array![[1.0, 2.0]].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0], [1.0]];
        assert!(train_logreg(x.view(), &[1, 1], 1.0, 0).is_err());
        assert!(train_logreg(x.view(), &[0, 1], 0.0, 0).is_err());
        assert!(train_logreg(array![[f64::NAN], [1.0]].view(), &[0, 1], 1.0, 0).is_err());
        assert!(train_logreg(array![[1.0]].view(), &[0], 1.0, 0).is_err());
    }

    #[test]
    fn loss_never_increases() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [-1.0, 0.3], [0.5, 0.5], [1.5, 2.0]];
        let y = [0, 1, 2, 0, 1, 2];
        let (_, trace) = fit_logreg(x.view(), &y, 10.0, 0).unwrap();
        assert!(trace.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.losses.len() > 2);
    }

    #[test]
    fn strong_regularization_converges() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [-1.0, 0.3]];
        let (_, trace) = fit_logreg(x.view(), &[0, 1, 1, 0], 0.01, 0).unwrap();
        assert!(trace.converged);
        assert!(trace.gradient_norm <= GRADIENT_TOLERANCE);
    }
}
