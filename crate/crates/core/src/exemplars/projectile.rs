use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const G: f64 = 9.8;
/// Samples per trajectory.
pub const SAMPLES: usize = 64;
/// Trajectories are sampled on `[0, T_END]` seconds, endpoints included.
pub const T_END: f64 = 2.0;

pub fn time_step() -> f64 {
    T_END / (SAMPLES - 1) as f64
}

pub fn time_grid() -> Vec<f64> {
    (0..SAMPLES).map(|k| k as f64 * time_step()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchParams {
    /// Launch speed, m/s.
    pub u: f64,
    /// Launch angle, degrees.
    pub theta_deg: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: LaunchParams,
    pub y: Vec<f64>,
}

impl Trajectory {
    /// `y(t) = u sin(theta) t - g t^2 / 2 + beta t^3 + gamma t^5`, no range
    /// checks.
    pub fn sample(params: LaunchParams) -> Self {
        let vy = params.u * params.theta_deg.to_radians().sin();
        let y = time_grid()
            .into_iter()
            .map(|t| vy * t - 0.5 * G * t * t + params.beta * t.powi(3) + params.gamma * t.powi(5))
            .collect();
        Self { params, y }
    }
}

/// Trajectory within the training ranges `u in [1, 6]`, `theta in [30, 60]`.
pub fn gen_trajectory(u: f64, theta_deg: f64, beta: f64, gamma: f64) -> Result<Trajectory> {
    if !(1.0..=6.0).contains(&u) || !(30.0..=60.0).contains(&theta_deg) {
        return Err(Error::InvalidArgument(format!("launch (u={u}, theta={theta_deg}) outside [1,6] x [30,60]")));
    }
    Ok(Trajectory::sample(LaunchParams { u, theta_deg, beta, gamma }))
}

/// `(beta, gamma)` families in the training set: true projectiles and two
/// pseudo-projectile families.
pub const FAMILIES: [(f64, f64); 3] = [(0.0, 0.0), (2.0, 1.0), (2.0, -1.0)];

/// 30 speeds x 30 angles x 3 families = 2700 trajectories.
pub fn projectile_dataset() -> Vec<Trajectory> {
    let grid = |lo: f64, hi: f64, n: usize| (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64);
    let mut out = Vec::with_capacity(2700);
    for &(beta, gamma) in &FAMILIES {
        for u in grid(1.0, 6.0, 30) {
            for th in grid(30.0, 60.0, 30) {
                out.push(Trajectory::sample(LaunchParams { u, theta_deg: th, beta, gamma }));
            }
        }
    }
    out
}

/// Second central difference of `y` at the interior samples.
pub fn second_difference(y: &[f64], dt: f64) -> Vec<f64> {
    y.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]) / (dt * dt)).collect()
}

/// RMS deviation of the sampled acceleration from `-g`; zero for a true
/// projectile. Lower is better.
pub fn accel_objective(y: &[f64], dt: f64) -> Result<f64> {
    if y.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 samples".into()));
    }
    let acc = second_difference(y, dt);
    Ok((acc.iter().map(|a| (a + G) * (a + G)).sum::<f64>() / acc.len() as f64).sqrt())
}

/// Rise above the launch point. An interior sample maximum is refined by
/// the parabola through it and its two neighbours, which is exact for a
/// ballistic arc.
pub fn max_height(y: &[f64]) -> f64 {
    let (k, &peak) = y
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |b, (i, v)| if *v > *b.1 { (i, v) } else { b });
    let mut top = peak;
    if k > 0 && k + 1 < y.len() {
        let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
        let curv = a - 2.0 * b + c;
        if curv < 0.0 {
            top = b - (c - a) * (c - a) / (8.0 * curv);
        }
    }
    top - y[0]
}
