//! Box-constrained Nelder-Mead maximizer, written as an ask/tell state
//! machine so several independent searches can share batched evaluations.

#[derive(Debug, Clone)]
enum Phase {
    Init,
    Reflect,
    Expand { xr: Vec<f64>, fr: f64 },
    Contract { fr: f64 },
    Shrink { k: usize },
}

/// Minimizes `-f` internally; non-finite values rank last.
#[derive(Debug, Clone)]
pub struct NelderMead {
    lower: Vec<f64>,
    upper: Vec<f64>,
    simplex: Vec<(Vec<f64>, f64)>,
    init_points: Vec<Vec<f64>>,
    phase: Phase,
    pending: Option<Vec<f64>>,
    evals: usize,
    max_evals: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl NelderMead {
    /// Start from `x0` with an axis-aligned initial simplex of size `step`.
    pub fn new(x0: &[f64], step: &[f64], lower: &[f64], upper: &[f64], max_evals: usize) -> Self {
        let d = x0.len();
        let clip = |mut x: Vec<f64>| {
            for k in 0..d {
                x[k] = x[k].clamp(lower[k], upper[k]);
            }
            x
        };
        let start = clip(x0.to_vec());
        let mut init_points = vec![start.clone()];
        for k in 0..d {
            let mut x = start.clone();
            x[k] += step[k];
            if x[k] > upper[k] {
                x[k] = start[k] - step[k];
            }
            init_points.push(clip(x));
        }
        init_points.reverse();
        Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            simplex: Vec::with_capacity(d + 1),
            init_points,
            phase: Phase::Init,
            pending: None,
            evals: 0,
            max_evals,
            best: None,
        }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn clip(&self, mut x: Vec<f64>) -> Vec<f64> {
        for k in 0..x.len() {
            x[k] = x[k].clamp(self.lower[k], self.upper[k]);
        }
        x
    }

    fn centroid_step(&self, t: f64) -> Vec<f64> {
        let d = self.dim();
        let worst = &self.simplex[d].0;
        let x = (0..d)
            .map(|k| {
                let c = self.simplex[..d].iter().map(|(x, _)| x[k]).sum::<f64>() / d as f64;
                c + t * (worst[k] - c)
            })
            .collect();
        self.clip(x)
    }

    fn sort(&mut self) {
        self.simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    }

    /// Next point to evaluate, or `None` once the budget is spent.
    pub fn ask(&mut self) -> Option<Vec<f64>> {
        if self.evals >= self.max_evals {
            return None;
        }
        if self.pending.is_none() {
            let d = self.dim();
            let x = match &self.phase {
                Phase::Init => self.init_points.last().cloned()?,
                Phase::Reflect => {
                    self.sort();
                    self.centroid_step(-1.0)
                }
                Phase::Expand { .. } => self.centroid_step(-2.0),
                Phase::Contract { fr } => {
                    let t = if *fr < self.simplex[d].1 { -0.5 } else { 0.5 };
                    self.centroid_step(t)
                }
                Phase::Shrink { k } => {
                    let best = &self.simplex[0].0;
                    let x = (0..d).map(|j| best[j] + 0.5 * (self.simplex[*k].0[j] - best[j])).collect();
                    self.clip(x)
                }
            };
            self.pending = Some(x);
        }
        self.pending.clone()
    }

    /// Report the objective value at the last asked point.
    pub fn tell(&mut self, value: f64) {
        let x = self.pending.take().expect("tell without ask");
        self.evals += 1;
        let g = if value.is_finite() { -value } else { f64::INFINITY };
        if self.best.as_ref().is_none_or(|b| g < b.1) {
            self.best = Some((x.clone(), g));
        }
        let d = self.dim();
        self.phase = match std::mem::replace(&mut self.phase, Phase::Init) {
            Phase::Init => {
                self.init_points.pop();
                self.simplex.push((x, g));
                if self.init_points.is_empty() { Phase::Reflect } else { Phase::Init }
            }
            Phase::Reflect => {
                if g < self.simplex[0].1 {
                    Phase::Expand { xr: x, fr: g }
                } else if g < self.simplex[d - 1].1 {
                    self.simplex[d] = (x, g);
                    Phase::Reflect
                } else {
                    Phase::Contract { fr: g }
                }
            }
            Phase::Expand { xr, fr } => {
                self.simplex[d] = if g < fr { (x, g) } else { (xr, fr) };
                Phase::Reflect
            }
            Phase::Contract { fr } => {
                if g < self.simplex[d].1.min(fr) {
                    self.simplex[d] = (x, g);
                    Phase::Reflect
                } else {
                    Phase::Shrink { k: 1 }
                }
            }
            Phase::Shrink { k } => {
                self.simplex[k] = (x, g);
                if k < d { Phase::Shrink { k: k + 1 } } else { Phase::Reflect }
            }
        };
    }

    /// Best point evaluated so far and its (maximized) value.
    pub fn best(&self) -> Option<(Vec<f64>, f64)> {
        self.best.as_ref().map(|(x, g)| (x.clone(), -g))
    }
}

/// Sequential convenience wrapper: maximize `f` from `x0`.
pub fn maximize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut nm = NelderMead::new(x0, step, lower, upper, max_evals.max(1));
    while let Some(x) = nm.ask() {
        let v = f(&x);
        nm.tell(v);
    }
    nm.best().expect("at least one evaluation")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let mut f = |x: &[f64]| -((x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2));
        let (x, v) = maximize(&mut f, &[0.0, 0.0], &[0.5, 0.5], &[-3.0, -3.0], &[3.0, 3.0], 400);
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 0.5).abs() < 1e-3);
        assert!(v > -1e-5);
    }

    #[test]
    fn respects_box_and_budget() {
        let mut calls = 0;
        let mut f = |x: &[f64]| {
            calls += 1;
            x[0] + x[1]
        };
        let (x, _) = maximize(&mut f, &[0.0, 0.0], &[0.5, 0.5], &[-1.0, -1.0], &[1.0, 1.0], 30);
        assert!(calls <= 30);
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(x[0] + x[1] > 1.5);
    }

    #[test]
    fn never_worse_than_start() {
        let mut f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos();
        let v0 = f(&[0.2, 0.1]);
        let (_, v) = maximize(&mut f, &[0.2, 0.1], &[0.3, 0.3], &[-3.0, -3.0], &[3.0, 3.0], 30);
        assert!(v >= v0);
    }

    #[test]
    fn interleaved_searches_match_sequential_ones() {
        let f = |x: &[f64]| -(x[0] - 0.3).powi(2) - (x[1] * x[0] - 0.2).powi(2);
        let starts = [[0.0, 0.0], [1.0, -1.0], [-2.0, 2.0]];
        let mut nms: Vec<NelderMead> =
            starts.iter().map(|s| NelderMead::new(s, &[0.2, 0.2], &[-3.0; 2], &[3.0; 2], 25)).collect();
        loop {
            let asks: Vec<(usize, Vec<f64>)> =
                nms.iter_mut().enumerate().filter_map(|(i, n)| n.ask().map(|x| (i, x))).collect();
            if asks.is_empty() {
                break;
            }
            for (i, x) in asks {
                nms[i].tell(f(&x));
            }
        }
        for (s, nm) in starts.iter().zip(&nms) {
            let seq = maximize(&mut |x| f(x), s, &[0.2, 0.2], &[-3.0; 2], &[3.0; 2], 25);
            assert_eq!(nm.best().unwrap(), seq);
        }
    }
}
