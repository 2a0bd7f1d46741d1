#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tinder_core::{CovarianceMode, DataMatrix, MixtureParams, SoftAssignment};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DataMatrix<f64> {
    let values = Array2::from_shape_fn((n, d), |_| scale * normal(rng));
    DataMatrix::new(values, None).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, k: usize, d: usize, mode: CovarianceMode) -> MixtureParams<f64> {
    let logits = Array1::from_shape_fn(k, |_| normal(rng));
    let means = Array2::from_shape_fn((k, d), |_| 1.5 * normal(rng));
    let cols = if mode == CovarianceMode::Spherical { 1 } else { d };
    let log_var = Array2::from_shape_fn((k, cols), |_| 0.5 * normal(rng));
    MixtureParams::new(logits, means, log_var, mode).unwrap()
}

/// Row-wise softmax of Gaussian noise; `spread` controls how peaked rows are.
pub fn random_assignment(rng: &mut ChaCha8Rng, n: usize, k: usize, spread: f64) -> SoftAssignment<f64> {
    let mut resp = Array2::zeros((n, k));
    for i in 0..n {
        let logits: Vec<f64> = (0..k).map(|_| spread * normal(rng)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        for c in 0..k {
            resp[[i, c]] = (logits[c] - max).exp() / total;
        }
    }
    SoftAssignment::new(resp).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, k: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Central differences of `f` over the flat unconstrained parameters.
pub fn finite_difference<F>(params: &MixtureParams<f64>, step: f64, f: F) -> Vec<f64>
where
    F: Fn(&MixtureParams<f64>) -> f64,
{
    let base = params.to_flat();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += step;
            let mut minus = base.clone();
            minus[i] -= step;
            let fp = f(&params.with_flat(&plus).unwrap());
            let fm = f(&params.with_flat(&minus).unwrap());
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖₂ / max(‖b‖₂, tiny)`.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}
