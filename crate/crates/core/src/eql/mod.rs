//! Equation learner: a two-hidden-layer network of physics-flavoured units,
//! pruned by connection contribution until its surviving structure can be
//! read out as a closed-form expression.

mod bench;
mod expr;
mod net;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dae::csv_err;
use crate::error::{Error, Result};

pub use bench::{lotka_volterra, magnetic_moment, van_der_pol};
pub use expr::{readout_equation, readout_equation_affine, simplify_equation, Atom, Func, SymbolicExpr, Term, MAX_TERMS};
pub use net::{
    connection_contribution, fit_baseline, prune_connections, prune_round, train_prune_loop, EqlNet, LayerMask, PruneHistory,
    PruneStop, RoundRecord,
};

/// Rows of inputs with a scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} input rows, {} targets", x.len(), y.len())));
        }
        if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != names.len()) {
            return Err(Error::Shape(format!("row {i} has {} inputs, expected {}", r.len(), names.len())));
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { names, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Columns `names..., target`.
    pub fn write_csv(&self, path: &Path, target: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.names.iter().map(String::as_str).chain([target])).map_err(csv_err)?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record(x.iter().chain([y]).map(|v| format!("{v:e}"))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read `target` and the input columns from a headed CSV. Without
    /// explicit `inputs`, every other column is an input except those
    /// prefixed `attr_`, which annotate rather than explain.
    pub fn read_csv(path: &Path, target: &str, inputs: Option<&[String]>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| Error::Unknown { kind: "column", name: name.into() })
        };
        let t = find(target)?;
        let names: Vec<String> = match inputs {
            Some(cols) => cols.to_vec(),
            None => header.iter().filter(|h| *h != target && !h.starts_with("attr_")).cloned().collect(),
        };
        let idx = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse(format!("row {i}: missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {i}: {e}")))
            };
            x.push(idx.iter().map(|&k| field(k)).collect::<Result<Vec<_>>>()?);
            y.push(field(t)?);
        }
        Self::new(names, x, y)
    }

    /// Seeded 80-20 train/validation split.
    /// Per-column mean and population standard deviation (1 for constant
    /// columns) and the z-scored copy.
    pub fn standardized(&self) -> (Self, Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let d = self.n_inputs();
        let mean: Vec<f64> = (0..d).map(|j| self.x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..d)
            .map(|j| {
                let v = self.x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 { v.sqrt() } else { 1.0 }
            })
            .collect();
        let x = self.x.iter().map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect()).collect();
        (Self { names: self.names.clone(), x, y: self.y.clone() }, mean, sd)
    }

    pub fn split(&self, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (self.len() * 4).div_ceil(5);
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }
}

/// Activation of one hidden unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Identity,
    Sin,
    Cos,
    Square,
    Sinh,
    /// Product of two pre-activations.
    Product,
}

impl UnitKind {
    /// Periodic and exponential units only appear in the first layer.
    pub fn first_layer_only(self) -> bool {
        matches!(self, UnitKind::Sin | UnitKind::Cos | UnitKind::Sinh)
    }

    pub fn fan_in(self) -> usize {
        if self == UnitKind::Product {
            2
        } else {
            1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Identity => "identity",
            UnitKind::Sin => "sin",
            UnitKind::Cos => "cos",
            UnitKind::Square => "square",
            UnitKind::Sinh => "sinh",
            UnitKind::Product => "product",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "identity" | "id" => UnitKind::Identity,
            "sin" => UnitKind::Sin,
            "cos" => UnitKind::Cos,
            "square" | "sq" => UnitKind::Square,
            "sinh" => UnitKind::Sinh,
            "product" | "prod" => UnitKind::Product,
            other => return Err(Error::Unknown { kind: "unit", name: other.to_string() }),
        })
    }
}

/// Parse a comma-separated dictionary such as `sq,prod,sin`.
pub fn parse_dictionary(s: &str) -> Result<Vec<UnitKind>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqlSpec {
    pub n_inputs: usize,
    pub layer1: Vec<UnitKind>,
    pub layer2: Vec<UnitKind>,
    pub target_sparsity: f64,
    /// Fraction k of each layer's surviving connections removed per round.
    pub prune_fraction: f64,
    pub retrain_epochs: usize,
    /// Epochs of dense training before pruning starts.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Pruning stops when validation MSE exceeds this multiple of the baseline.
    pub stop_factor: f64,
    /// Extra retraining rounds granted to a pruned network above the stop
    /// threshold before the round is undone.
    pub recovery_rounds: usize,
    /// No layer is pruned below this many connections.
    pub min_layer_connections: usize,
    /// Train on z-scored inputs; the readout is mapped back to raw inputs.
    #[serde(default)]
    pub standardize_inputs: bool,
    pub seed: u64,
}

impl EqlSpec {
    /// `copies` units of identity and of every dictionary entry per layer;
    /// first-layer-only kinds are left out of the second layer.
    pub fn from_dictionary(n_inputs: usize, dict: &[UnitKind], copies: usize) -> Result<Self> {
        if dict.is_empty() || copies == 0 {
            return Err(Error::InvalidArgument("empty unit dictionary".into()));
        }
        let mut kinds = vec![UnitKind::Identity];
        kinds.extend(dict.iter().copied().filter(|k| *k != UnitKind::Identity));
        let layer = |keep: &dyn Fn(UnitKind) -> bool| -> Vec<UnitKind> {
            kinds.iter().copied().filter(|k| keep(*k)).flat_map(|k| std::iter::repeat_n(k, copies)).collect()
        };
        let spec = Self {
            n_inputs,
            layer1: layer(&|_| true),
            layer2: layer(&|k| !k.first_layer_only()),
            ..Self::default_for(n_inputs)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub(crate) fn default_for(n_inputs: usize) -> Self {
        Self {
            n_inputs,
            layer1: Vec::new(),
            layer2: Vec::new(),
            target_sparsity: 0.9,
            prune_fraction: 0.02,
            retrain_epochs: 10,
            epochs: 1500,
            batch_size: 32,
            lr: 3e-3,
            stop_factor: 3.0,
            recovery_rounds: 10,
            min_layer_connections: 4,
            standardize_inputs: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_inputs == 0 || self.layer1.is_empty() || self.layer2.is_empty() {
            return bad("inputs and both hidden layers must be nonempty".into());
        }
        if self.layer2.iter().any(|k| k.first_layer_only()) {
            return bad("sin, cos and sinh units are restricted to the first layer".into());
        }
        if !(self.target_sparsity > 0.0 && self.target_sparsity < 1.0) {
            return bad(format!("sparsity {} outside (0, 1)", self.target_sparsity));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return bad(format!("prune fraction {} outside (0, 1)", self.prune_fraction));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.stop_factor >= 1.0) {
            return bad(format!("batch {} lr {} stop factor {}", self.batch_size, self.lr, self.stop_factor));
        }
        Ok(())
    }
}

/// Duplicate rows whose target is above the `q_hi` quantile (`factor` copies
/// in total) and drop rows below the `q_lo` quantile.
pub fn balance_dataset(data: &Dataset, q_hi: f64, q_lo: f64, factor: usize) -> Result<Dataset> {
    if data.len() < 20 {
        return Err(Error::InvalidArgument(format!("{} rows; balancing needs at least 20", data.len())));
    }
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo > q_hi || factor == 0 {
        return Err(Error::InvalidArgument(format!("quantiles {q_lo}/{q_hi}, factor {factor}")));
    }
    let mut sorted = data.y.clone();
    sorted.sort_by(f64::total_cmp);
    let hi = quantile(&sorted, q_hi);
    let lo = quantile(&sorted, q_lo);
    let mut idx = Vec::new();
    for (i, &y) in data.y.iter().enumerate() {
        if y < lo {
            continue;
        }
        let copies = if y > hi { factor } else { 1 };
        idx.extend(std::iter::repeat_n(i, copies));
    }
    if idx.is_empty() {
        return Err(Error::InvalidArgument("every row was filtered out".into()));
    }
    Ok(data.subset(&idx))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Outcome of [`learn_equation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedEquation {
    /// Simplified and refit equation.
    pub expr: SymbolicExpr,
    /// Readout of the pruned network before simplification.
    pub raw: SymbolicExpr,
    pub history: PruneHistory,
    pub sparsity: f64,
    /// MSE of `expr` over the whole dataset.
    pub mse: f64,
    /// Selection score across restarts, see [`selection_score`].
    pub score: f64,
    /// Seed of the restart that produced `expr`.
    pub seed: u64,
}

/// Bayesian information criterion of an equation, `n ln(mse + floor) + k ln n`
/// with `k` free coefficients. The floor, 1e-12 of the mean square target,
/// keeps exact fits from being ranked on rounding noise.
pub fn selection_score(expr: &SymbolicExpr, data: &Dataset) -> f64 {
    let n = data.len().max(1) as f64;
    let floor = 1e-12 * data.y.iter().map(|y| y * y).sum::<f64>() / n;
    n * (expr.mse(data) + floor).ln() + expr.n_params() as f64 * n.ln()
}

/// Baseline fit, then `restarts` prune loops seeded `spec.seed + r`; each is
/// read out and simplified with tolerance `tau`, and the equation with the
/// lowest [`selection_score`] is kept.
pub fn learn_equation(spec: &EqlSpec, data: &Dataset, tau: f64, restarts: usize) -> Result<LearnedEquation> {
    spec.validate()?;
    let (train, shift, scale) = if spec.standardize_inputs {
        data.standardized()
    } else {
        (data.clone(), vec![0.0; data.n_inputs()], vec![1.0; data.n_inputs()])
    };
    let baseline = fit_baseline(&train, spec.seed)?;
    let mut best: Option<LearnedEquation> = None;
    let mut last_err = None;
    for r in 0..restarts.max(1) as u64 {
        let seed = spec.seed.wrapping_add(r);
        let attempt = (|| -> Result<LearnedEquation> {
            let (net, history) = train_prune_loop(EqlSpec { seed, ..spec.clone() }, &train, baseline)?;
            let raw = readout_equation_affine(&net, &data.names, &shift, &scale)?;
            let expr = simplify_equation(&raw, data, tau)?;
            let (mse, score) = (expr.mse(data), selection_score(&expr, data));
            Ok(LearnedEquation { expr, raw, history, sparsity: net.sparsity(), mse, score, seed })
        })();
        match attempt {
            Ok(eq) => {
                log::info!("eql restart {r}: {} (mse {:.3e}, score {:.1}, sparsity {:.3})", eq.expr, eq.mse, eq.score, eq.sparsity);
                if best.as_ref().is_none_or(|b| eq.score < b.score) {
                    best = Some(eq);
                }
            }
            Err(e @ Error::TermExplosion(..)) => {
                log::warn!("eql restart {r}: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart ran"))
}
