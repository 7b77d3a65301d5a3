use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::al::best_so_far;
use super::ExperimentRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub pop: usize,
    pub budget: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { pop: 100, budget: 10_000, f: 0.8, cr: 0.9, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeRun {
    pub best: ExperimentRecord,
    /// Best value after the initial population and after each generation.
    pub history: Vec<f64>,
    /// Objective value of every evaluation in order (`None` if non-finite).
    pub evaluations: Vec<Option<f64>>,
}

impl DeRun {
    pub fn best_so_far(&self) -> Vec<f64> {
        best_so_far(self.evaluations.iter().copied())
    }

    pub fn evals_to_reach(&self, target: f64) -> Option<usize> {
        self.best_so_far().iter().position(|&b| b >= target).map(|i| i + 1)
    }
}

/// Latin hypercube sample of `n` points in the box.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, lower: &[f64], upper: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let d = lower.len();
    let mut pts = vec![vec![0.0; d]; n];
    for k in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, &s) in strata.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            pts[i][k] = lower[k] + u * (upper[k] - lower[k]);
        }
    }
    pts
}

/// DE/rand/1/bin maximizer with immediate replacement. Trial components
/// leaving the box are redrawn uniformly inside it. Non-finite objective
/// values rank below everything and still consume budget.
pub fn de_optimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    lower: &[f64],
    upper: &[f64],
    cfg: &DeConfig,
) -> Result<DeRun> {
    let d = lower.len();
    if d == 0 || upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidArgument("invalid de bounds".into()));
    }
    if cfg.pop < 4 || cfg.budget < cfg.pop {
        return Err(Error::InvalidArgument(format!("need pop >= 4 and budget >= pop, got {} / {}", cfg.pop, cfg.budget)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluations = Vec::with_capacity(cfg.budget);
    let mut eval = |z: &[f64], evaluations: &mut Vec<Option<f64>>| {
        let y = objective(z);
        let y = y.is_finite().then_some(y);
        evaluations.push(y);
        y.unwrap_or(f64::NEG_INFINITY)
    };

    let mut pop = latin_hypercube(cfg.pop, lower, upper, &mut rng);
    let mut fit: Vec<f64> = pop.iter().map(|z| eval(z, &mut evaluations)).collect();
    let argmax = |fit: &[f64]| (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b });
    let mut history = vec![fit[argmax(&fit)]];

    'outer: while evaluations.len() < cfg.budget {
        for i in 0..cfg.pop {
            if evaluations.len() >= cfg.budget {
                break 'outer;
            }
            let mut pick = || loop {
                let r = rng.random_range(0..cfg.pop);
                if r != i {
                    break r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };
            let jrand = rng.random_range(0..d);
            let mut trial = pop[i].clone();
            for k in 0..d {
                if k == jrand || rng.random::<f64>() < cfg.cr {
                    let v = pop[r1][k] + cfg.f * (pop[r2][k] - pop[r3][k]);
                    trial[k] = if v < lower[k] || v > upper[k] { rng.random_range(lower[k]..upper[k]) } else { v };
                }
            }
            let ft = eval(&trial, &mut evaluations);
            if ft >= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
        history.push(fit[argmax(&fit)]);
    }
    if (evaluations.len() - cfg.pop) % cfg.pop != 0 {
        history.push(fit[argmax(&fit)]);
    }
    let b = argmax(&fit);
    info!("differential evolution: {} evaluations, best {}", evaluations.len(), fit[b]);
    Ok(DeRun { best: ExperimentRecord { z: pop[b].clone(), y: fit[b] }, history, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(z: &[f64]) -> f64 {
        -z.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn sphere_reaches_origin() {
        let cfg = DeConfig { seed: 5, ..Default::default() };
        let run = de_optimize(&mut sphere, &[-3.0; 4], &[3.0; 4], &cfg).unwrap();
        assert_eq!(run.evaluations.len(), 10_000);
        assert!(run.best.y > -1e-2, "{}", run.best.y);
        assert!(run.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn pop_equal_budget_returns_initial_best() {
        let cfg = DeConfig { pop: 20, budget: 20, seed: 1, ..Default::default() };
        let mut seen = Vec::new();
        let run = de_optimize(
            &mut |z| {
                let y = sphere(z);
                seen.push(y);
                y
            },
            &[-3.0; 2],
            &[3.0; 2],
            &cfg,
        )
        .unwrap();
        assert_eq!(run.history.len(), 1);
        assert_eq!(run.best.y, seen.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn latin_hypercube_hits_each_stratum_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = latin_hypercube(50, &[0.0, -1.0], &[1.0, 1.0], &mut rng);
        for k in 0..2 {
            let (lo, w) = if k == 0 { (0.0, 1.0) } else { (-1.0, 2.0) };
            let mut strata: Vec<usize> = pts.iter().map(|p| ((p[k] - lo) / w * 50.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn deterministic_and_in_bounds() {
        let cfg = DeConfig { pop: 10, budget: 300, seed: 8, ..Default::default() };
        let mut pts = Vec::new();
        let a = de_optimize(
            &mut |z| {
                pts.push(z.to_vec());
                (z[0] * 2.0).sin() - z[1].abs()
            },
            &[-1.0, -2.0],
            &[1.0, 2.0],
            &cfg,
        )
        .unwrap();
        let b = de_optimize(&mut |z| (z[0] * 2.0).sin() - z[1].abs(), &[-1.0, -2.0], &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert!(pts.iter().all(|p| (-1.0..=1.0).contains(&p[0]) && (-2.0..=2.0).contains(&p[1])));
    }

    #[test]
    fn non_finite_consumes_budget() {
        let cfg = DeConfig { pop: 8, budget: 64, seed: 0, ..Default::default() };
        let run = de_optimize(&mut |z| if z[0] > 0.0 { f64::NAN } else { z[0] }, &[-1.0], &[1.0], &cfg).unwrap();
        assert_eq!(run.evaluations.len(), 64);
        assert!(run.best.y <= 0.0);
    }
}
