//! Independent reference implementations used to check the library:
//! a cyclic Jacobi eigensolver, a projected-gradient QP solver for the SVM
//! dual, finite differences, and planted synthetic data generators.
#![allow(dead_code)]

use embedprobe::classify::{cross_validate, ClassifierKind, EvalReport, ParamGrid};
use embedprobe::tasks::{make_folds, Dataset};
use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Eigenvalues (descending) and matching unit eigenvectors (as columns) of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Population covariance, computed with explicit loops.
pub fn covariance_loops(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[[i, j]]).sum::<f64>() / n as f64).collect();
    Array2::from_shape_fn((d, d), |(a, b)| {
        (0..n).map(|i| (x[[i, a]] - mean[a]) * (x[[i, b]] - mean[b])).sum::<f64>() / n as f64
    })
}

/// `Σα − ½ Σᵢⱼ αᵢαⱼyᵢyⱼKᵢⱼ`.
pub fn svm_dual_value(kernel: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 ≤ α ≤ c, yᵀα = 0}`: bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c)).collect() };
    let residual = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let bound = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // residual is non-increasing in mu
        if residual(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximizes the SVM dual by accelerated projected gradient ascent.
pub fn qp_oracle(kernel: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * kernel[[i, j]]);
    let lipschitz = (0..n).map(|i| q[[i, i]]).sum::<f64>().max(1e-12);
    let step = 1.0 / lipschitz;
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0_f64;
    let mut best = svm_dual_value(kernel, y, &alpha);
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[[i, j]] * z[j]).sum::<f64>()).collect();
        let moved: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&moved, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&alpha)
            .map(|(a, prev)| a + (t - 1.0) / t_next * (a - prev))
            .collect();
        alpha = next;
        t = t_next;
        best = best.max(svm_dual_value(kernel, y, &alpha));
    }
    best
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `n` balanced labels over `classes`, in random order.
pub fn balanced_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

pub fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Assigns folds and runs four-fold cross-validation.
pub fn evaluate(
    features: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
    kind: ClassifierKind,
    grid: &ParamGrid,
    seed: u64,
) -> EvalReport {
    let dataset = Dataset::new(features, labels, class_names(classes)).expect("valid dataset");
    let dataset = make_folds(&dataset, seed).expect("enough rows");
    cross_validate(&dataset, kind, grid, seed).expect("cross-validation runs")
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn as_array1(v: &[f64]) -> Array1<f64> {
    Array1::from_vec(v.to_vec())
}
