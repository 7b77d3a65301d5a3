use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::AcqKind;
use super::gp::{fit_hyperparameters, GpModel};
use super::kernel::distance;
use super::nelder_mead::NelderMead;
use super::sobol::{sobol_init, Sobol, MAX_DIM};
use super::ExperimentRecord;
use crate::error::{Error, Result};

/// Nearest training points used for the cheap variance bound.
const BOUND_NEIGHBOURS: usize = 12;

/// Where the loop may place experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchSpace {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Integers `lower..=upper` on a single axis; every unevaluated value is
    /// scored each round.
    IntegerGrid { lower: i64, upper: i64 },
}

impl SearchSpace {
    pub fn cube(d: usize, half_width: f64) -> Self {
        SearchSpace::Box { lower: vec![-half_width; d], upper: vec![half_width; d] }
    }

    pub fn dim(&self) -> usize {
        match self {
            SearchSpace::Box { lower, .. } => lower.len(),
            SearchSpace::IntegerGrid { .. } => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SearchSpace::Box { lower, upper } => {
                if lower.is_empty() || lower.len() > MAX_DIM || lower.len() != upper.len() {
                    return Err(Error::InvalidArgument(format!("box dimension must be 1..={MAX_DIM}")));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::InvalidArgument("box bounds must be finite with lower < upper".into()));
                }
            }
            SearchSpace::IntegerGrid { lower, upper } => {
                if lower > upper {
                    return Err(Error::InvalidArgument("grid lower above upper".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlConfig {
    pub n_init: usize,
    pub budget: usize,
    pub acquisition: AcqKind,
    pub seed: u64,
    /// Observation noise as a fraction of the fitted signal variance.
    pub noise_ratio: f64,
    pub n_candidates: usize,
    pub polish_starts: usize,
    pub polish_evals: usize,
    /// Hyperparameters are refit every round while the data set is at most
    /// this large, afterwards only when it has grown by `refit_growth`.
    pub refit_every_until: usize,
    pub refit_growth: f64,
    /// Upper bound on records used for the likelihood search.
    pub fit_subset: usize,
}

impl Default for AlConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            budget: 50,
            acquisition: AcqKind::Ei,
            seed: 0,
            noise_ratio: 0.0,
            n_candidates: 512,
            polish_starts: 8,
            polish_evals: 30,
            refit_every_until: 50,
            refit_growth: 0.1,
            fit_subset: 300,
        }
    }
}

/// One evaluation, as logged. `y` is `None` when the objective returned a
/// non-finite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRecord {
    pub iter: usize,
    pub z: Vec<f64>,
    pub y: Option<f64>,
    pub acq_kind: String,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlRun {
    pub records: Vec<AlRecord>,
    pub best: Option<ExperimentRecord>,
}

impl AlRun {
    pub fn valid(&self) -> Vec<ExperimentRecord> {
        valid_records(&self.records)
    }

    /// Best observed value after each evaluation (`-inf` before the first
    /// finite observation).
    pub fn best_so_far(&self) -> Vec<f64> {
        best_so_far(self.records.iter().map(|r| r.y))
    }

    /// Number of evaluations needed before the best-so-far reached `target`.
    pub fn evals_to_reach(&self, target: f64) -> Option<usize> {
        self.best_so_far().iter().position(|&b| b >= target).map(|i| i + 1)
    }
}

pub(crate) fn best_so_far(ys: impl Iterator<Item = Option<f64>>) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    ys.map(|y| {
        if let Some(v) = y {
            best = best.max(v);
        }
        best
    })
    .collect()
}

fn valid_records(records: &[AlRecord]) -> Vec<ExperimentRecord> {
    records.iter().filter_map(|r| r.y.map(|y| ExperimentRecord { z: r.z.clone(), y })).collect()
}

/// Sequential GP active learning (maximization). Spends exactly `budget`
/// objective evaluations, the first `n_init` on a scrambled Sobol design.
pub fn al_loop(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    space: &SearchSpace,
    cfg: &AlConfig,
) -> Result<AlRun> {
    space.validate()?;
    if cfg.n_init == 0 || cfg.budget <= cfg.n_init {
        return Err(Error::InvalidArgument(format!(
            "need 0 < n_init < budget, got n_init={} budget={}",
            cfg.n_init, cfg.budget
        )));
    }
    if let AcqKind::Ucb { lambda } = cfg.acquisition {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument("ucb lambda must be non-negative".into()));
        }
    }
    if let SearchSpace::IntegerGrid { lower, upper } = space {
        let size = (upper - lower + 1) as usize;
        if cfg.budget > size {
            return Err(Error::InvalidArgument(format!("budget {} exceeds grid size {size}", cfg.budget)));
        }
    }
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records: Vec<AlRecord> = Vec::with_capacity(cfg.budget);
    let mut evaluate = |z: Vec<f64>, kind: &str, records: &mut Vec<AlRecord>| {
        let y = objective(&z);
        let y = y.is_finite().then_some(y);
        if y.is_none() {
            debug!("non-finite objective at {z:?}; excluded from the model");
        }
        records.push(AlRecord {
            iter: records.len(),
            z,
            y,
            acq_kind: kind.to_string(),
            elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    };

    let mut fallback_stream = Sobol::scrambled(space.dim(), rng.random())?;
    for z in initial_design(space, cfg.n_init, &mut fallback_stream)? {
        evaluate(z, "sobol", &mut records);
    }

    let mut gp: Option<GpModel<f64>> = None;
    let mut fitted_at = 0usize;
    while records.len() < cfg.budget {
        let valid = valid_records(&records);
        let z = if valid.is_empty() {
            (next_unseen(space, &records, &mut fallback_stream), "sobol")
        } else {
            let refit = match &gp {
                None => true,
                Some(_) => {
                    valid.len() <= cfg.refit_every_until
                        || valid.len() as f64 >= fitted_at as f64 * (1.0 + cfg.refit_growth)
                }
            };
            if refit {
                let h = fit_hyperparameters(&valid, cfg.noise_ratio, cfg.fit_subset)?;
                debug!("refit at n={}: {:?} fallback={}", valid.len(), h.params, h.fallback);
                gp = Some(GpModel::fit(&valid, h.params, h.prior_mean)?);
                fitted_at = valid.len();
            } else if let Some(model) = gp.as_mut() {
                for r in &valid[model.len()..] {
                    model.push(r.z.clone(), r.y)?;
                }
            }
            let model = gp.as_ref().expect("model fitted above");
            let best = valid.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
            let taken: Vec<&[f64]> = records.iter().map(|r| r.z.as_slice()).collect();
            let z = match space {
                SearchSpace::Box { lower, upper } => {
                    propose_box(model, cfg, best, lower, upper, &taken, &mut rng)?
                        .unwrap_or_else(|| next_unseen(space, &records, &mut fallback_stream))
                }
                SearchSpace::IntegerGrid { lower, upper } => propose_grid(model, cfg, best, *lower, *upper, &taken),
            };
            (z, cfg.acquisition.name())
        };
        evaluate(z.0, z.1, &mut records);
    }

    let best = valid_records(&records).into_iter().fold(None::<ExperimentRecord>, |acc, r| match acc {
        Some(b) if b.y >= r.y => Some(b),
        _ => Some(r),
    });
    info!("active learning finished: {} evaluations, best {:?}", records.len(), best.as_ref().map(|b| b.y));
    Ok(AlRun { records, best })
}

fn initial_design(space: &SearchSpace, n: usize, stream: &mut Sobol) -> Result<Vec<Vec<f64>>> {
    match space {
        SearchSpace::Box { lower, upper } => {
            let u: Vec<Vec<f64>> = stream.take(n).collect();
            Ok(u.into_iter()
                .map(|p| p.iter().enumerate().map(|(k, &v)| lower[k] + v * (upper[k] - lower[k])).collect())
                .collect())
        }
        SearchSpace::IntegerGrid { .. } => {
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
            while out.len() < n {
                let z = grid_point(space, stream);
                if !out.contains(&z) {
                    out.push(z);
                }
            }
            Ok(out)
        }
    }
}

fn grid_point(space: &SearchSpace, stream: &mut Sobol) -> Vec<f64> {
    let SearchSpace::IntegerGrid { lower, upper } = space else { unreachable!() };
    let size = (upper - lower + 1) as f64;
    let u = stream.next_point()[0];
    vec![(*lower as f64 + (u * size).floor()).min(*upper as f64)]
}

/// Next fallback point not already evaluated.
fn next_unseen(space: &SearchSpace, records: &[AlRecord], stream: &mut Sobol) -> Vec<f64> {
    loop {
        let z = match space {
            SearchSpace::Box { lower, upper } => {
                let u = stream.next_point();
                u.iter().enumerate().map(|(k, &v)| lower[k] + v * (upper[k] - lower[k])).collect()
            }
            SearchSpace::IntegerGrid { .. } => grid_point(space, stream),
        };
        if !records.iter().any(|r| r.z == z) {
            return z;
        }
    }
}

fn propose_grid(model: &GpModel<f64>, cfg: &AlConfig, best: f64, lower: i64, upper: i64, taken: &[&[f64]]) -> Vec<f64> {
    let cands: Vec<Vec<f64>> = (lower..=upper)
        .map(|v| vec![v as f64])
        .filter(|z| !taken.iter().any(|t| *t == z.as_slice()))
        .collect();
    let post = model.posterior_many(&cands);
    let mut best_i = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, (m, s)) in post.into_iter().enumerate() {
        let sc = cfg.acquisition.rank_score(m, s, best);
        if sc > best_s {
            best_s = sc;
            best_i = i;
        }
    }
    cands[best_i].clone()
}

/// Screen Sobol candidates with a cheap upper bound on the acquisition, score
/// exactly only those that can still make the top list, then polish the top
/// few with Nelder-Mead. Returns `None` when every candidate collides with an
/// existing record.
fn propose_box(
    model: &GpModel<f64>,
    cfg: &AlConfig,
    best: f64,
    lower: &[f64],
    upper: &[f64],
    taken: &[&[f64]],
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<f64>>> {
    let acq = cfg.acquisition;
    let span = lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max);
    let min_dist = 1e-6 * span;
    let far_enough = |z: &[f64]| taken.iter().all(|t| distance(t, z) > min_dist);

    let cands: Vec<Vec<f64>> = sobol_init(cfg.n_candidates, lower, upper, Some(rng.random()))?
        .into_iter()
        .filter(|z| far_enough(z))
        .collect();
    if cands.is_empty() {
        return Ok(None);
    }

    // exact mean plus a variance bound from the nearest training inputs
    // only; conditioning on more data can only shrink the variance further
    let means = model.mean_many(&cands);
    let bounds: Vec<f64> = cands
        .iter()
        .zip(&means)
        .map(|(z, &m)| acq.rank_score(m, model.local_sd_bound(z, BOUND_NEIGHBOURS), best))
        .collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| bounds[b].total_cmp(&bounds[a]).then(a.cmp(&b)));

    let keep = cfg.polish_starts.max(1);
    let mut scored: Vec<(usize, f64)> = Vec::new();
    let chunk = 32;
    let mut pos = 0;
    while pos < order.len() {
        if scored.len() >= keep {
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            if bounds[order[pos]] < scored[keep - 1].1 {
                break;
            }
        }
        let idx: Vec<usize> = order[pos..(pos + chunk).min(order.len())].to_vec();
        let zs: Vec<Vec<f64>> = idx.iter().map(|&i| cands[i].clone()).collect();
        for (&i, (m, s)) in idx.iter().zip(model.posterior_many(&zs)) {
            scored.push((i, acq.rank_score(m, s, best)));
        }
        pos += idx.len();
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(keep);

    let (mut best_z, mut best_score) = (cands[scored[0].0].clone(), scored[0].1);
    if cfg.polish_evals > 0 {
        // the searches advance in lockstep so each step is one batched solve
        let step: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.05 * (u - l)).collect();
        let mut searches: Vec<NelderMead> = scored
            .iter()
            .map(|&(i, _)| NelderMead::new(&cands[i], &step, lower, upper, cfg.polish_evals))
            .collect();
        loop {
            let asks: Vec<(usize, Vec<f64>)> =
                searches.iter_mut().enumerate().filter_map(|(i, s)| s.ask().map(|x| (i, x))).collect();
            if asks.is_empty() {
                break;
            }
            let zs: Vec<Vec<f64>> = asks.iter().map(|(_, x)| x.clone()).collect();
            for ((i, _), (m, s)) in asks.iter().zip(model.posterior_many(&zs)) {
                searches[*i].tell(acq.rank_score(m, s, best));
            }
        }
        for s in &searches {
            if let Some((z, v)) = s.best() {
                if v > best_score && far_enough(&z) {
                    best_score = v;
                    best_z = z;
                }
            }
        }
    }
    debug!("acquisition: {} of {} candidates scored exactly, best {best_score:e}", pos, cands.len());
    Ok(Some(best_z))
}

pub fn write_jsonl(path: &Path, records: &[AlRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<AlRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
