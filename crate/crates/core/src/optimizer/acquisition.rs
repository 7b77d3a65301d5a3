use serde::{Deserialize, Serialize};

use super::gp::GpModel;
use crate::scalar::Scalar;

/// Acquisition rule for a maximization problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcqKind {
    Ei,
    Ucb { lambda: f64 },
}

impl AcqKind {
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn ucb() -> Self {
        AcqKind::Ucb { lambda: Self::DEFAULT_LAMBDA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AcqKind::Ei => "ei",
            AcqKind::Ucb { .. } => "ucb",
        }
    }

    /// Score from posterior moments; `best` is the incumbent observation.
    pub fn score(&self, mean: f64, sd: f64, best: f64) -> f64 {
        match *self {
            AcqKind::Ei => expected_improvement(mean, sd, best),
            AcqKind::Ucb { lambda } => mean + lambda * sd,
        }
    }

    /// Monotone transform of [`score`](Self::score) used to rank candidates:
    /// log-EI for EI (which underflows far from the incumbent), the plain
    /// value for UCB. Non-decreasing in `sd`.
    pub fn rank_score(&self, mean: f64, sd: f64, best: f64) -> f64 {
        match *self {
            AcqKind::Ei => log_expected_improvement(mean, sd, best),
            AcqKind::Ucb { lambda } => mean + lambda * sd,
        }
    }
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `E[max(0, f - best)]` for `f ~ N(mean, sd^2)`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let delta = mean - best;
    if !(sd > 0.0) {
        return delta.max(0.0);
    }
    let u = delta / sd;
    (delta * norm_cdf(u) + sd * norm_pdf(u)).max(0.0)
}

/// `ln(u Phi(u) + phi(u))` without underflow for very negative `u`.
fn log_h(u: f64) -> f64 {
    if u > -5.0 {
        return (u * norm_cdf(u) + norm_pdf(u)).ln();
    }
    let x = -u;
    // u Phi(u) + phi(u) = phi(u) (1 - x R(x)), R the Mills ratio
    let tail = if x < 30.0 {
        let mut t = x;
        for k in (1..=80).rev() {
            t = x + k as f64 / t;
        }
        1.0 - x / t
    } else {
        let x2 = x * x;
        (1.0 - 3.0 / x2 + 15.0 / (x2 * x2)) / x2
    };
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln() + tail.ln()
}

/// Natural log of [`expected_improvement`]; `-inf` when it is exactly zero.
pub fn log_expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let delta = mean - best;
    if !(sd > 0.0) {
        return if delta > 0.0 { delta.ln() } else { f64::NEG_INFINITY };
    }
    sd.ln() + log_h(delta / sd)
}

pub fn acquire_ucb<T: Scalar>(model: &GpModel<T>, z: &[T], lambda: T) -> T {
    let (m, s) = model.posterior(z);
    m + lambda * s
}

pub fn acquire_ei<T: Scalar>(model: &GpModel<T>, z: &[T], best: T) -> T {
    let (m, s) = model.posterior(z);
    T::lit(expected_improvement(m.as_f64(), s.as_f64(), best.as_f64()))
}
