use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;

/// Glorot/Xavier uniform initialization on `[-sqrt(6/(in+out)), +sqrt(6/(in+out))]`.
pub fn glorot_matrix<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("length matches by construction")
}

/// `n` draws from `N(0, std^2)`.
pub fn gaussian_vec<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    (0..n).map(|_| normal.sample(rng)).collect()
}
