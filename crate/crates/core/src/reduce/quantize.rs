//! Bit truncation and sign binarization.
//!
//! Truncation maps every coordinate onto a signed 32-bit integer grid using
//! one scale for the whole set (the largest absolute value), discards the
//! `b` low-order bits with a flooring shift, and maps the surviving
//! `2^(32−b)` levels back onto `[−1, 1]` with an affine map that hits both
//! endpoints. At `b = 31` only two levels remain and every coordinate becomes
//! `−1` or `+1`.

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

pub const MAX_BITS: u32 = 31;

const INT_MAX: f64 = 2_147_483_647.0; // 2^31 − 1

/// Scale and truncation depth, shared by every value of one set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    scale: f64,
    bits: u32,
}

impl Truncation {
    /// `scale` is the global max-abs of the data being quantized.
    pub fn new(scale: f64, bits: u32) -> Result<Self> {
        if bits > MAX_BITS {
            return Err(Error::InvalidReduction(format!(
                "cannot remove {bits} bits, at most {MAX_BITS}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidReduction(
                "cannot truncate an all-zero set".into(),
            ));
        }
        Ok(Truncation { scale, bits })
    }

    /// Number of distinct output levels, `2^(32−b)`.
    pub fn levels(&self) -> u64 {
        1u64 << (32 - self.bits)
    }

    /// The integer level of `x` after the shift, in `[−L, L−1]` with
    /// `L = 2^(31−b)`.
    pub fn level(&self, x: f64) -> i64 {
        let scaled = (x / self.scale * INT_MAX).floor().clamp(-INT_MAX, INT_MAX) as i64;
        scaled.div_euclid(1i64 << self.bits)
    }

    pub fn apply(&self, x: f64) -> f64 {
        let half = 1i64 << (MAX_BITS - self.bits);
        let q = self.level(x);
        // 2(q + L)/(2L − 1) − 1, written to avoid cancellation.
        (2 * q + 1) as f64 / (2 * half - 1) as f64
    }
}

/// Truncates raw values, using their own max-abs as the scale.
pub fn truncate_values(values: &[f64], bits: u32) -> Result<Vec<f64>> {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let t = Truncation::new(scale, bits)?;
    Ok(values.iter().map(|&x| t.apply(x)).collect())
}

/// Removes `bits` low-order bits from every coordinate of the set.
pub fn truncate_bits(set: &EmbeddingSet, bits: u32) -> Result<EmbeddingSet> {
    let t = Truncation::new(set.max_abs(), bits)?;
    set.with_vectors(set.vectors().mapv(|x| t.apply(x)))
}

/// `+1` for non-negative coordinates, `−1` otherwise.
pub fn sign_value(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_binarize(set: &EmbeddingSet) -> EmbeddingSet {
    set.with_vectors(set.vectors().mapv(sign_value))
        .expect("same shape as a valid set")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(values: &[f64]) -> EmbeddingSet {
        EmbeddingSet::from_entries(
            "s",
            values.iter().enumerate().map(|(i, &v)| (format!("w{i}"), vec![v])),
        )
        .unwrap()
    }

    #[test]
    fn full_truncation_hand_example() {
        // s = 0.5: 0.5 -> i = 2^31−1 -> q = 0 -> +1; −0.25 -> i < 0 -> q = −1 -> −1.
        let out = truncate_bits(&one_dim(&[0.5, -0.25]), 31).unwrap();
        assert_eq!(out.vectors().column(0).to_vec(), vec![1.0, -1.0]);
    }

    #[test]
    fn zero_bits_is_nearly_identity() {
        let values = [0.75, -1.5, 0.0, 1e-9, -0.3333, 1.5];
        let out = truncate_values(&values, 0).unwrap();
        let step = 2.0 / (2f64.powi(32) - 1.0);
        for (x, y) in values.iter().zip(&out) {
            assert!((x / 1.5 - y).abs() <= step + 1e-15, "{x} -> {y}");
        }
        assert_eq!(out[5], 1.0);
    }

    #[test]
    fn level_count() {
        let t = Truncation::new(1.0, 29).unwrap();
        assert_eq!(t.levels(), 8);
        let values: Vec<f64> = (-1000..=1000).map(|i| i as f64 / 1000.0).collect();
        let mut out = truncate_values(&values, 29).unwrap();
        out.dedup();
        assert_eq!(out.len(), 8);
        assert_eq!(out[0], -1.0);
        assert_eq!(*out.last().unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(truncate_bits(&one_dim(&[1.0]), 32).is_err());
        assert!(truncate_bits(&one_dim(&[0.0, 0.0]), 3).is_err());
    }

    #[test]
    fn sign_examples() {
        let set = EmbeddingSet::from_entries("s", vec![("w".to_string(), vec![0.3, -0.7, 0.0])]).unwrap();
        let once = sign_binarize(&set);
        assert_eq!(once.lookup("w").unwrap(), &[1.0, -1.0, 1.0]);
        assert_eq!(sign_binarize(&once), once);
    }
}
