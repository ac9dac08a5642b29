//! Principal component analysis over a whole embedding set.
//!
//! Components are the top eigenvectors of the population covariance
//! (divide by `n`) of the mean-centered matrix. Each component is oriented
//! so that its largest-magnitude coordinate is positive.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Projects rows of `x`: `components · (v − mean)`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.ncols(),
            });
        }
        let centered = &x - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }

    /// Maps projected rows back: `mean + componentsᵀ · z`.
    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                actual: z.ncols(),
            });
        }
        Ok(z.dot(&self.components) + &self.mean)
    }
}

/// Population covariance of the rows of `x`.
pub fn covariance(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).expect("at least one row");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / n;
    (mean, cov)
}

/// Fits `k` components to the rows of a matrix.
pub fn pca_fit_matrix(x: ArrayView2<'_, f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidReduction(format!(
            "PCA needs 1 ≤ k ≤ {d}, got k = {k}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidReduction("PCA needs at least 2 rows".into()));
    }
    let (mean, cov) = covariance(x);
    let eigen = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::zeros((k, d));
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eigen.eigenvectors.column(idx);
        let pivot = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[row, j]] = sign * v[j];
        }
        explained_variance.push(eigen.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

pub fn pca_fit(set: &EmbeddingSet, k: usize) -> Result<PcaModel> {
    pca_fit_matrix(set.vectors(), k)
}

/// Projects every word of the set; the output has `k` dimensions.
pub fn pca_transform(model: &PcaModel, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    set.with_vectors(model.transform(set.vectors())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn rank_one_line() {
        let x = array![[-2.0, -4.0], [-1.0, -2.0], [0.5, 1.0], [3.0, 6.0]];
        let model = pca_fit_matrix(x.view(), 2).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(model.components[[0, 0]], 1.0 / s5, epsilon = 1e-12);
        assert_abs_diff_eq!(model.components[[0, 1]], 2.0 / s5, epsilon = 1e-12);
        assert_abs_diff_eq!(model.explained_variance[1], 0.0, epsilon = 1e-12);
        assert!(model.explained_variance[0] > 0.0);
    }

    #[test]
    fn mean_maps_to_zero_and_round_trips() {
        let x = array![[1.0, 2.0, 0.5], [0.0, -1.0, 2.0], [3.0, 0.5, 1.0], [2.0, 2.0, -1.0]];
        let model = pca_fit_matrix(x.view(), 3).unwrap();
        let mean = model.mean.clone().insert_axis(Axis(0));
        let z = model.transform(mean.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let back = model.inverse_transform(model.transform(x.view()).unwrap().view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn components_are_oriented() {
        let x = array![[1.0, -3.0], [-1.0, 3.1], [0.2, -0.4], [-0.3, 0.2]];
        let model = pca_fit_matrix(x.view(), 2).unwrap();
        for row in model.components.rows() {
            let pivot = row.iter().fold(0.0_f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn rejects_bad_k() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert!(pca_fit_matrix(x.view(), 0).is_err());
        assert!(pca_fit_matrix(x.view(), 3).is_err());
        assert!(pca_fit_matrix(array![[1.0, 2.0]].view(), 1).is_err());
        let model = pca_fit_matrix(x.view(), 1).unwrap();
        assert!(model.transform(array![[1.0]].view()).is_err());
    }
}
