use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per pump pattern.
pub const PATTERN_SAMPLES: usize = 864;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpPattern {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `max(0, a x^2 + b x + c sqrt(x))` at `x = k / D`, `k = 0..D`.
    pub samples: Vec<f64>,
}

pub fn pump_pattern(a: f64, b: f64, c: f64) -> PumpPattern {
    let samples = (0..PATTERN_SAMPLES)
        .map(|k| {
            let x = k as f64 / PATTERN_SAMPLES as f64;
            (a * x * x + b * x + c * x.sqrt()).max(0.0)
        })
        .collect();
    PumpPattern { a, b, c, samples }
}

/// Phase wrap: `(y mod 2 pi) / 2 pi`, in `[0, 1)`.
pub fn wrap(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&y| {
            let w = y.rem_euclid(TAU) / TAU;
            if w >= 1.0 { 0.0 } else { w }
        })
        .collect()
}

/// Parameter sweep boxes for pattern generation.
pub const PATTERN_BOX: [(f64, f64); 3] = [(-800.0, 800.0), (-400.0, 400.0), (-200.0, 200.0)];

/// Wrapped patterns on a regular `n_a x n_b x n_c` grid over the sweep box.
pub fn pattern_sweep(n_a: usize, n_b: usize, n_c: usize) -> Vec<Vec<f64>> {
    let lin = |(lo, hi): (f64, f64), n: usize, i: usize| {
        if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }
    };
    let mut out = Vec::with_capacity(n_a * n_b * n_c);
    for i in 0..n_a {
        for j in 0..n_b {
            for k in 0..n_c {
                let p = pump_pattern(lin(PATTERN_BOX[0], n_a, i), lin(PATTERN_BOX[1], n_b, j), lin(PATTERN_BOX[2], n_c, k));
                out.push(wrap(&p.samples));
            }
        }
    }
    out
}

/// Coefficients of the directivity polynomial, in the order
/// `z1^2, z2^2, z1, z1 z2, z2, 1`.
pub const DIRECTIVITY_COEFFS: [f64; 6] = [0.0467, -0.0265, -0.175, -0.0955, 0.22, 2.707];

/// Directivity as a function of the first two latent coordinates; any
/// further coordinates are ignored.
pub fn directivity_surrogate(z: &[f64]) -> f64 {
    let [c11, c22, c1, c12, c2, c0] = DIRECTIVITY_COEFFS;
    let (z1, z2) = (z[0], z.get(1).copied().unwrap_or(0.0));
    c11 * z1 * z1 + c22 * z2 * z2 + c1 * z1 + c12 * z1 * z2 + c2 * z2 + c0
}

/// Exact maximum of the directivity polynomial over `[lo, hi]^2`.
///
/// The Hessian is indefinite, so the maximum lies on the boundary: each edge
/// is a one-variable quadratic maximized in closed form.
pub fn directivity_box_max(lo: f64, hi: f64) -> ([f64; 2], f64) {
    let f = |z1: f64, z2: f64| directivity_surrogate(&[z1, z2]);
    let [c11, c22, c1, c12, c2, _] = DIRECTIVITY_COEFFS;
    let mut cands: Vec<[f64; 2]> = vec![[lo, lo], [lo, hi], [hi, lo], [hi, hi]];
    for fixed in [lo, hi] {
        // z1 fixed: c22 z2^2 + (c12 z1 + c2) z2
        if c22 != 0.0 {
            let z2 = -(c12 * fixed + c2) / (2.0 * c22);
            if (lo..=hi).contains(&z2) {
                cands.push([fixed, z2]);
            }
        }
        // z2 fixed: c11 z1^2 + (c12 z2 + c1) z1
        if c11 != 0.0 {
            let z1 = -(c12 * fixed + c1) / (2.0 * c11);
            if (lo..=hi).contains(&z1) {
                cands.push([z1, fixed]);
            }
        }
    }
    let mut best = (cands[0], f(cands[0][0], cands[0][1]));
    for c in cands {
        let v = f(c[0], c[1]);
        if v > best.1 {
            best = (c, v);
        }
    }
    best
}

pub const GRATING_ORDERS: i64 = 160;

/// Synthetic 1-D grating response over orders `1..=160`: a Gaussian bump
/// centred on 47 with a small sinusoidal ripple.
pub fn grating_benchmark(order: i64) -> Result<f64> {
    if !(1..=GRATING_ORDERS).contains(&order) {
        return Err(Error::InvalidArgument(format!("grating order {order} outside 1..=160")));
    }
    let o = order as f64;
    Ok((-((o - 47.0) / 18.0).powi(2)).exp() + 0.02 * o.sin())
}

/// Exhaustive argmax over all orders.
pub fn grating_argmax() -> i64 {
    (1..=GRATING_ORDERS)
        .map(|o| (o, grating_benchmark(o).expect("in range")))
        .fold((0, f64::NEG_INFINITY), |b, (o, v)| if v > b.1 { (o, v) } else { b })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pattern_wraps_to_zero() {
        let p = pump_pattern(0.0, 0.0, 0.0);
        assert_eq!(p.samples.len(), PATTERN_SAMPLES);
        assert!(wrap(&p.samples).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_turn_wraps_to_zero() {
        assert_eq!(wrap(&[TAU, 2.0 * TAU, 0.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_phase_of_two_turns_gives_two_ramps() {
        let w = wrap(&pump_pattern(0.0, 2.0 * TAU, 0.0).samples);
        let half = PATTERN_SAMPLES / 2;
        for k in 0..half {
            assert!((w[k] - w[k + half]).abs() < 1e-9);
            assert!((w[k] - k as f64 / half as f64).abs() < 1e-9);
        }
        assert!(w.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn sweep_is_wrapped() {
        let s = pattern_sweep(3, 3, 3);
        assert_eq!(s.len(), 27);
        assert!(s.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn directivity_values() {
        assert_eq!(directivity_surrogate(&[0.0; 4]), 2.707);
        assert!((directivity_surrogate(&[1.0, 0.0, 0.0, 0.0]) - 2.5787).abs() < 1e-12);
        let a = directivity_surrogate(&[0.4, -1.2, 0.0, 0.0]);
        let b = directivity_surrogate(&[0.4, -1.2, 2.5, -3.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn box_max_agrees_with_dense_grid() {
        let (z, v) = directivity_box_max(-3.0, 3.0);
        let n = 601;
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let z1 = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
                let z2 = -3.0 + 6.0 * j as f64 / (n - 1) as f64;
                grid_best = grid_best.max(directivity_surrogate(&[z1, z2]));
            }
        }
        assert!(v >= grid_best - 1e-12);
        assert!(v - grid_best < 1e-3);
        assert_eq!(z, [-3.0, 3.0]);
        assert!((v - 4.9333).abs() < 1e-3);
    }

    #[test]
    fn grating_shape() {
        // the ripple moves the integer optimum one step left of the bump centre
        assert_eq!(grating_argmax(), 46);
        let peak = grating_benchmark(46).unwrap();
        assert!(peak > grating_benchmark(47).unwrap());
        assert!(grating_benchmark(1).unwrap() < 0.01 + 0.02);
        assert!(grating_benchmark(160).unwrap() < 0.01 + 0.02);
        assert!(grating_benchmark(0).is_err() && grating_benchmark(161).is_err());
    }
}
