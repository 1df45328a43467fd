//! Fixtures shared by the benchmarks.

use lcc_core::{LossMatrix, ParamGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of uniform losses over `points` evenly spaced grid values.
pub fn random_matrix(n: usize, points: usize, seed: u64) -> LossMatrix {
    let grid = ParamGrid::scalar((0..points).map(|i| i as f64 / (points - 1).max(1) as f64)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n).map(|_| (0..points).map(|_| rng.gen::<f64>()).collect()).collect();
    LossMatrix::from_rows(grid, rows).unwrap()
}

pub fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Features in `[0, 1]^d` with a smooth target.
pub fn regression_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen()).collect()).collect();
    let ys = xs.iter().map(|x| (x[0] * 6.0).sin() * 0.5 + x[d - 1] * 0.3).collect();
    (xs, ys)
}
