//! Seeded synthetic GLM instances for benchmarks and constant sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::sparse::SparseMatrix;

/// Dense Gaussian features with ±1 labels from a noisy random hyperplane.
pub fn gaussian_classification(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let plane: Vec<f64> = (0..d)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng) / (d as f64).sqrt())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let margin: f64 = row.iter().zip(&plane).map(|(a, b)| a * b).sum::<f64>()
            + 0.3 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    Dataset::new(SparseMatrix::from_dense(&rows), labels).expect("consistent shapes")
}

/// Dense Gaussian features with real-valued targets from a noisy linear model.
pub fn gaussian_regression(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let plane: Vec<f64> = (0..d)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng) / (d as f64).sqrt())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let target: f64 = row.iter().zip(&plane).map(|(a, b)| a * b).sum::<f64>()
            + 0.1 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        labels.push(target);
        rows.push(row);
    }
    Dataset::new(SparseMatrix::from_dense(&rows), labels).expect("consistent shapes")
}

/// Sparse binary features with power-law column frequencies (a handful of
/// near-always-on indicators, a long tail of rare ones) and labels from a
/// noisy hyperplane. Mimics the spectral decay and conditioning of the
/// LibSVM classification sets.
pub fn sparse_classification(n: usize, d: usize, density: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    // frequencies decay as c^{-0.8}, rescaled to hit the requested density
    let raw: Vec<f64> = (0..d).map(|c| (1.0 + c as f64).powf(-0.8)).collect();
    let mean_raw: f64 = raw.iter().sum::<f64>() / d as f64;
    let freq: Vec<f64> = raw
        .iter()
        .map(|&r| (r * density / mean_raw).min(0.95))
        .collect();
    let plane: Vec<f64> = (0..d)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng))
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut margin = 0.0;
        for c in 0..d {
            if rng.gen::<f64>() < freq[c] {
                row.push((c, 1.0));
                margin += plane[c];
            }
        }
        margin += <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    let matrix = SparseMatrix::from_rows(d, &rows).expect("rows built in order");
    Dataset::new(matrix, labels).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = gaussian_classification(10, 4, 3);
        let b = gaussian_classification(10, 4, 3);
        assert_eq!(a.labels, b.labels);
        for t in 0..10 {
            assert_eq!(a.matrix.row(t), b.matrix.row(t));
        }
        let c = gaussian_classification(10, 4, 4);
        assert!(a.labels != c.labels || a.matrix.row(0) != c.matrix.row(0));
    }

    #[test]
    fn classification_labels_are_signs() {
        let ds = gaussian_classification(25, 6, 1);
        assert!(ds.labels_are_signs());
        let sp = sparse_classification(25, 40, 0.1, 2);
        assert!(sp.labels_are_signs());
        assert!(sp.matrix.nnz() < 25 * 40 / 2);
    }
}
