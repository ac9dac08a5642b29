//! RBF-kernel support vector machine trained with sequential minimal
//! optimization.
//!
//! Each binary machine solves the C-SVM dual
//!
//! ```text
//! min_α  ½ αᵀQα − Σα    s.t.  0 ≤ α_i ≤ C,  Σ α_i y_i = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! by repeatedly optimizing two multipliers at a time. The pair is the
//! maximal-violating `i` together with the `j` that maximizes the second-order
//! gain, and the loop stops when the KKT violation `m(α) − M(α)` drops below
//! [`KKT_TOLERANCE`]. With three or more classes one machine is trained per
//! class (one-vs-rest) and the largest decision value wins.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KKT_TOLERANCE: f64 = 1e-3;
/// Iteration cap is this many passes of `n` pair updates each.
pub const MAX_PASSES: usize = 10;

const TAU: f64 = 1e-12;

/// `exp(−γ‖x − z‖²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidTraining(format!("gamma must be positive, got {gamma}")));
    }
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * d2).exp())
}

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
pub(crate) fn cross_sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let na = a.map_axis(Axis(1), |r| r.dot(&r));
    let nb = b.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = a.dot(&b.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
    }
    d
}

pub(crate) fn sq_distances(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut d = cross_sq_distances(a, a);
    d.diag_mut().fill(0.0);
    d
}

/// Result of one binary dual solve.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Offset with decision `f(x) = Σ α_i y_i K(x_i, x) − rho`.
    pub rho: f64,
    pub iterations: usize,
    /// Final `m(α) − M(α)`.
    pub violation: f64,
}

/// `Σα − ½ αᵀQα`, the dual objective in its maximization form.
pub fn dual_objective(kernel: ArrayView2<'_, f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Solves one binary C-SVM dual for a precomputed kernel matrix and labels
/// in `{−1, +1}`.
pub fn solve_dual(kernel: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<DualSolution> {
    let n = y.len();
    if kernel.dim() != (n, n) {
        return Err(Error::InvalidTraining(format!(
            "kernel is {:?}, expected {n}×{n}",
            kernel.dim()
        )));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidTraining(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidTraining("binary labels must be ±1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InvalidTraining("only one class present".into()));
    }

    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα − eᵀα.
    let mut grad = vec![-1.0; n];
    let max_iterations = MAX_PASSES * n * n;
    let mut iterations = 0;
    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let violation = loop {
        let mut g_max = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= g_max {
                    g_max = v;
                    i = t;
                }
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            let b = g_max - v;
            if i != usize::MAX && b > 0.0 {
                let mut a = kernel[[i, i]] + kernel[[t, t]] - 2.0 * kernel[[i, t]];
                if a <= 0.0 {
                    a = TAU;
                }
                let gain = -(b * b) / a;
                if gain <= best_gain {
                    best_gain = gain;
                    j = t;
                }
            }
        }
        let violation = g_max - g_min;
        if violation < KKT_TOLERANCE || j == usize::MAX {
            break violation;
        }
        if iterations >= max_iterations {
            return Err(Error::NotConverged {
                iterations,
                violation,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = y[i] * y[j] * kernel[[i, j]];
        if y[i] != y[j] {
            let mut quad = kernel[[i, i]] + kernel[[j, j]] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kernel[[i, i]] + kernel[[j, j]] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (yi, yj) = (y[i], y[j]);
        let (ki, kj) = (kernel.row(i), kernel.row(j));
        for t in 0..n {
            grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
        }
    };

    Ok(DualSolution {
        rho: offset(&alpha, &grad, y, c),
        alpha,
        iterations,
        violation,
    })
}

fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (upper + lower) / 2.0
    }
}

/// A trained RBF machine (binary) or set of one-vs-rest machines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Training rows with a nonzero coefficient in at least one machine.
    pub support_vectors: Array2<f64>,
    /// `α_i y_i` per machine (rows) and support vector (columns).
    pub dual_coefs: Array2<f64>,
    pub biases: Vec<f64>,
    pub gamma: f64,
    pub c: f64,
    pub n_classes: usize,
}

impl SvmModel {
    pub fn n_machines(&self) -> usize {
        self.biases.len()
    }

    /// Decision values, one column per machine.
    pub fn decision_function(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.support_vectors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.ncols(),
                actual: features.ncols(),
            });
        }
        let dist = cross_sq_distances(features, self.support_vectors.view());
        Ok(self.decision_from_distances(dist.view()))
    }

    /// Decision values from squared distances to the support vectors.
    fn decision_from_distances(&self, dist: ArrayView2<'_, f64>) -> Array2<f64> {
        let kernel = dist.mapv(|d| (-self.gamma * d).exp());
        let mut out = kernel.dot(&self.dual_coefs.t());
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        out
    }

    fn classes_from_decisions(&self, decisions: &Array2<f64>) -> Vec<usize> {
        decisions
            .rows()
            .into_iter()
            .map(|row| {
                if self.n_machines() == 1 {
                    usize::from(row[0] > 0.0)
                } else {
                    super::logreg::argmax(row)
                }
            })
            .collect()
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let decisions = self.decision_function(features)?;
        Ok(self.classes_from_decisions(&decisions))
    }
}

/// An SVM fit that remembers which training rows became support vectors,
/// so predictions can reuse precomputed distances.
pub(crate) struct FittedSvm {
    pub model: SvmModel,
    pub support: Vec<usize>,
}

impl FittedSvm {
    /// Predicts from a `rows × n_train` matrix of squared distances to the
    /// training set the model was fit on.
    pub fn predict_from_distances(&self, cross: ArrayView2<'_, f64>) -> Vec<usize> {
        let dist = cross.select(Axis(1), &self.support);
        let decisions = self.model.decision_from_distances(dist.view());
        self.model.classes_from_decisions(&decisions)
    }
}

fn class_count(labels: &[usize]) -> Result<usize> {
    let Some(&first) = labels.first() else {
        return Err(Error::InvalidTraining("no training rows".into()));
    };
    if labels.iter().all(|&l| l == first) {
        return Err(Error::InvalidTraining("only one class present".into()));
    }
    Ok(labels.iter().max().expect("non-empty") + 1)
}

/// Fits from precomputed squared training distances.
pub(crate) fn fit_with_distances(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    sq_dist: ArrayView2<'_, f64>,
    c: f64,
    gamma: f64,
) -> Result<FittedSvm> {
    if features.nrows() != labels.len() {
        return Err(Error::InvalidTraining(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidTraining(format!("gamma must be positive, got {gamma}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTraining("non-finite feature".into()));
    }
    let n_classes = class_count(labels)?;
    let kernel = sq_dist.mapv(|d| (-gamma * d).exp());
    let positives: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };

    let mut solutions = Vec::with_capacity(positives.len());
    for &positive in &positives {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == positive { 1.0 } else { -1.0 })
            .collect();
        let solution = solve_dual(kernel.view(), &y, c)?;
        solutions.push((y, solution));
    }

    let support: Vec<usize> = (0..labels.len())
        .filter(|&i| solutions.iter().any(|(_, s)| s.alpha[i] > 0.0))
        .collect();
    let mut dual_coefs = Array2::zeros((solutions.len(), support.len()));
    for (k, (y, s)) in solutions.iter().enumerate() {
        for (col, &i) in support.iter().enumerate() {
            dual_coefs[[k, col]] = s.alpha[i] * y[i];
        }
    }
    let model = SvmModel {
        support_vectors: features.select(Axis(0), &support),
        dual_coefs,
        biases: solutions.iter().map(|(_, s)| -s.rho).collect(),
        gamma,
        c,
        n_classes,
    };
    Ok(FittedSvm { model, support })
}

/// Trains an RBF SVM. Two classes give one machine with class 1 as the
/// positive side; more classes give one-vs-rest machines. SMO is
/// deterministic, so the seed has no effect.
pub fn train_svm_rbf(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    c: f64,
    gamma: f64,
    _seed: u64,
) -> Result<SvmModel> {
    let dist = sq_distances(features);
    fit_with_distances(features, labels, dist.view(), c, gamma).map(|f| f.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(rbf_kernel(&[0.3, -2.0], &[0.3, -2.0], 4.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap(),
            0.367879,
            epsilon = 1e-6
        );
        let (x, z) = ([1.0, 2.0, 3.0], [-0.5, 0.25, 9.0]);
        assert_eq!(rbf_kernel(&x, &z, 0.1).unwrap(), rbf_kernel(&z, &x, 0.1).unwrap());
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
    }

    fn xor() -> (Array2<f64>, Vec<usize>) {
        let x = array![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
        (x, vec![1, 1, 0, 0])
    }

    #[test]
    fn xor_is_learned() {
        let (x, y) = xor();
        let model = train_svm_rbf(x.view(), &y, 10.0, 1.0, 0).unwrap();
        assert_eq!(model.predict(x.view()).unwrap(), y);
        // By symmetry all four points are support vectors with equal weight,
        // up to the solver's stopping tolerance.
        assert_eq!(model.support_vectors.nrows(), 4);
        let coefs = model.dual_coefs.row(0);
        for &v in coefs {
            assert_abs_diff_eq!(v.abs(), coefs[0].abs(), epsilon = 1e-3);
            assert!(v.abs() <= model.c);
        }
        assert_abs_diff_eq!(coefs.sum(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn xor_matches_closed_form() {
        // With K_same = 1, K_adjacent = e^-4, K_opposite = e^-8 and all α
        // equal, the dual optimum is α = 1 / (1 + e^-8 − 2e^-4) when below C.
        let (x, y) = xor();
        let ys: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let k = sq_distances(x.view()).mapv(|d| (-d).exp());
        let sol = solve_dual(k.view(), &ys, 10.0).unwrap();
        let expected = 1.0 / (1.0 + (-8.0_f64).exp() - 2.0 * (-4.0_f64).exp());
        for a in &sol.alpha {
            assert_abs_diff_eq!(*a, expected, epsilon = 2e-3);
        }
        assert_abs_diff_eq!(sol.rho, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn two_points_any_large_c() {
        let x = array![[0.0, 0.0], [2.0, 1.0]];
        for c in [1.0, 10.0, 1000.0] {
            let model = train_svm_rbf(x.view(), &[0, 1], c, 0.5, 0).unwrap();
            assert_eq!(model.predict(x.view()).unwrap(), vec![0, 1]);
        }
    }

    #[test]
    fn three_classes_one_vs_rest() {
        let x = array![
            [0.0, 0.0], [0.2, 0.1], [5.0, 5.0], [5.1, 4.9], [-5.0, 5.0], [-4.8, 5.2]
        ];
        let y = [0, 0, 1, 1, 2, 2];
        let model = train_svm_rbf(x.view(), &y, 10.0, 0.5, 0).unwrap();
        assert_eq!(model.n_machines(), 3);
        assert_eq!(model.predict(x.view()).unwrap(), y.to_vec());
        for &v in &model.dual_coefs {
            assert!(v.abs() <= model.c + 1e-12);
        }
    }

    #[test]
    fn cached_distances_agree_with_direct_prediction() {
        let x = array![[0.0, 0.1], [1.0, 0.9], [0.2, -0.1], [0.9, 1.2], [0.5, 0.4]];
        let y = [0, 1, 0, 1, 1];
        let d = sq_distances(x.view());
        let fitted = fit_with_distances(x.view(), &y, d.view(), 1.0, 0.7).unwrap();
        let probe = array![[0.3, 0.3], [0.8, 0.7]];
        let cross = cross_sq_distances(probe.view(), x.view());
        assert_eq!(
            fitted.predict_from_distances(cross.view()),
            fitted.model.predict(probe.view()).unwrap()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0], [1.0]];
        assert!(train_svm_rbf(x.view(), &[0, 0], 1.0, 1.0, 0).is_err());
        assert!(train_svm_rbf(x.view(), &[0, 1], -1.0, 1.0, 0).is_err());
        assert!(train_svm_rbf(x.view(), &[0, 1], 1.0, 0.0, 0).is_err());
        let model = train_svm_rbf(x.view(), &[0, 1], 1.0, 1.0, 0).unwrap();
        assert!(model.predict(array![[0.0, 1.0]].view()).is_err());
    }
}
