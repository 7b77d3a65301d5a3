//! Benchmark datasets for equation recovery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;

fn sample(n: usize, seed: u64, names: &[&str], lo: f64, hi: f64, f: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..names.len()).map(|_| rng.random_range(lo..hi)).collect()).collect();
    let y = x.iter().map(|r| f(r)).collect();
    Dataset { names: names.iter().map(|s| s.to_string()).collect(), x, y }
}

/// Interspecies dynamics `xdot = 3x - 2xy - x^2` on `[0, 3]^2`.
pub fn lotka_volterra(n: usize, seed: u64) -> Dataset {
    sample(n, seed, &["x", "y"], 0.0, 3.0, |v| 3.0 * v[0] - 2.0 * v[0] * v[1] - v[0] * v[0])
}

/// Relaxation oscillator `xdot = 10 (y - (x^3 - x) / 3)` on `[-2, 2]^2`.
pub fn van_der_pol(n: usize, seed: u64) -> Dataset {
    sample(n, seed, &["x", "y"], -2.0, 2.0, |v| 10.0 * (v[1] - (v[0].powi(3) - v[0]) / 3.0))
}

/// Orbital magnetic moment `mu = q v r` on `[0.5, 2]^3`.
pub fn magnetic_moment(n: usize, seed: u64) -> Dataset {
    sample(n, seed, &["q", "v", "r"], 0.5, 2.0, |v| v[0] * v[1] * v[2])
}
