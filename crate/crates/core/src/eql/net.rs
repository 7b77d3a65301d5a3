use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Activation, AdamState, Dense, Mlp, Tape, Tensor, Unit, Var};

use super::{Dataset, EqlSpec, UnitKind};

const BASELINE_WIDTH: usize = 20;
const BASELINE_EPOCHS: usize = 400;
const BASELINE_LR: f64 = 3e-3;
/// Prune fraction small enough that the ceiling cuts one connection per layer.
const SINGLE_CUT: f64 = 1e-9;

fn activation(kind: UnitKind) -> Activation {
    match kind {
        UnitKind::Identity | UnitKind::Product => Activation::Identity,
        UnitKind::Sin => Activation::Sin,
        UnitKind::Cos => Activation::Cos,
        UnitKind::Square => Activation::Square,
        UnitKind::Sinh => Activation::Sinh,
    }
}

/// Pre-activation columns are handed out to units in order.
fn plan(kinds: &[UnitKind]) -> Vec<Unit> {
    let mut col = 0;
    kinds
        .iter()
        .map(|&k| {
            let u = if k == UnitKind::Product {
                Unit::Product { a: col, b: col + 1 }
            } else {
                Unit::Single { act: activation(k), input: col }
            };
            col += k.fan_in();
            u
        })
        .collect()
}

fn pre_width(kinds: &[UnitKind]) -> usize {
    kinds.iter().map(|k| k.fan_in()).sum()
}

fn apply_units(plan: &[Unit], z: &[f64]) -> Vec<f64> {
    plan.iter()
        .map(|u| match *u {
            Unit::Single { act, input } => act.apply(z[input]),
            Unit::Product { a, b } => z[a] * z[b],
        })
        .collect()
}

/// Alive flags for one dense layer's weights (row-major) and biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    pub weight: Vec<bool>,
    pub bias: Vec<bool>,
}

impl LayerMask {
    fn full(w: usize, b: usize) -> Self {
        Self { weight: vec![true; w], bias: vec![true; b] }
    }

    pub fn alive(&self) -> usize {
        self.weight.iter().chain(&self.bias).filter(|a| **a).count()
    }

    pub fn total(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Network with its pruning masks. Layers: inputs -> units1 -> units2 -> 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqlNet {
    pub spec: EqlSpec,
    pub layers: Vec<Dense<f64>>,
    pub masks: Vec<LayerMask>,
}

impl EqlNet {
    pub fn new<R: Rng + ?Sized>(spec: EqlSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let dims = [
            (spec.n_inputs, pre_width(&spec.layer1)),
            (spec.layer1.len(), pre_width(&spec.layer2)),
            (spec.layer2.len(), 1),
        ];
        let layers: Vec<Dense<f64>> = dims.iter().map(|&(i, o)| Dense::xavier(i, o, rng)).collect();
        let masks = dims.iter().map(|&(i, o)| LayerMask::full(i * o, o)).collect();
        Ok(Self { spec, layers, masks })
    }

    pub fn plans(&self) -> [Vec<Unit>; 2] {
        [plan(&self.spec.layer1), plan(&self.spec.layer2)]
    }

    pub fn alive(&self) -> usize {
        self.masks.iter().map(LayerMask::alive).sum()
    }

    pub fn total(&self) -> usize {
        self.masks.iter().map(LayerMask::total).sum()
    }

    /// Masked connections (weights and biases) over all connections.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.alive() as f64 / self.total() as f64
    }

    /// Minimum surviving connections per layer: the target density of each
    /// layer, at least `min_layer_connections`, lowered on the largest layers
    /// until the floors together fit the global target.
    pub fn floors(&self) -> Vec<usize> {
        let keep = 1.0 - self.spec.target_sparsity;
        let min = self.spec.min_layer_connections;
        let mut f: Vec<usize> =
            self.masks.iter().map(|m| ((keep * m.total() as f64).floor() as usize).max(min).min(m.total())).collect();
        let budget = (keep * self.total() as f64).floor() as usize;
        while f.iter().sum::<usize>() > budget {
            let Some(l) = (0..f.len()).filter(|&l| f[l] > min).max_by_key(|&l| f[l]) else { break };
            f[l] -= 1;
        }
        f
    }

    /// Zero every masked parameter.
    pub(crate) fn apply_masks(&mut self) {
        let masks = self.masks.clone();
        let mut params = self.params();
        for (k, m) in masks.iter().enumerate() {
            zero_masked(&mut params[2 * k], &m.weight);
            zero_masked(&mut params[2 * k + 1], &m.bias);
        }
        self.set_params(params).expect("same shapes");
    }

    fn params(&self) -> Vec<Tensor<f64>> {
        self.layers.iter().flat_map(|l| [l.weight.clone(), l.bias.clone()]).collect()
    }

    fn set_params(&mut self, params: Vec<Tensor<f64>>) -> Result<()> {
        let acts = vec![Activation::Identity; self.layers.len()];
        let mut mlp = Mlp { layers: std::mem::take(&mut self.layers), activations: acts };
        let r = mlp.set_params(params);
        self.layers = mlp.layers;
        r
    }

    fn forward_tape(&self, tape: &mut Tape<f64>, vars: &[Var], x: Var) -> Result<Var> {
        let plans = self.plans();
        let mut h = x;
        for (k, p) in plans.into_iter().enumerate() {
            let z = tape.matmul(h, vars[2 * k])?;
            let z = tape.add_row(z, vars[2 * k + 1])?;
            h = tape.units(z, Arc::from(p))?;
        }
        let z = tape.matmul(h, vars[4])?;
        tape.add_row(z, vars[5])
    }

    /// Input of every dense layer for one sample, plus the output.
    pub fn trace(&self, x: &[f64]) -> ([Vec<f64>; 3], f64) {
        let plans = self.plans();
        let dense = |l: &Dense<f64>, h: &[f64]| -> Vec<f64> {
            (0..l.fan_out())
                .map(|j| h.iter().enumerate().map(|(i, v)| v * l.weight.get(i, j)).sum::<f64>() + l.bias.get(0, j))
                .collect()
        };
        let h1 = apply_units(&plans[0], &dense(&self.layers[0], x));
        let h2 = apply_units(&plans[1], &dense(&self.layers[1], &h1));
        let out = dense(&self.layers[2], &h2)[0];
        ([x.to_vec(), h1, h2], out)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trace(x).1
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        data.x.iter().zip(&data.y).map(|(x, y)| (self.predict(x) - y).powi(2)).sum::<f64>() / data.len().max(1) as f64
    }

    /// Minibatch Adam on MSE with masked parameters held at zero.
    pub fn train<R: Rng + ?Sized>(&mut self, data: &Dataset, epochs: usize, rng: &mut R) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let x = Tensor::from_rows(&data.x)?;
        let y = Tensor::matrix(data.len(), 1, data.y.clone())?;
        let mut params = self.params();
        let mut adam = AdamState::new(&params, self.spec.lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..epochs {
            order.shuffle(rng);
            for batch in order.chunks(self.spec.batch_size) {
                let step = (|| -> Result<Vec<Tensor<f64>>> {
                    let mut tape = Tape::new();
                    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect::<Result<_>>()?;
                    let xb = tape.constant(x.select_rows(batch))?;
                    let yb = tape.constant(y.select_rows(batch))?;
                    let out = self.forward_tape(&mut tape, &vars, xb)?;
                    let loss = tape.mse(out, yb)?;
                    let g = tape.backward(loss)?;
                    vars.iter().map(|v| g.wrt(*v).cloned()).collect()
                })();
                let grads = step.map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
                params = adam.step(&params, &grads).map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
                for (k, m) in self.masks.iter().enumerate() {
                    zero_masked(&mut params[2 * k], &m.weight);
                    zero_masked(&mut params[2 * k + 1], &m.bias);
                }
            }
        }
        self.set_params(params)?;
        if self.layers.iter().any(|l| !l.weight.is_finite() || !l.bias.is_finite()) {
            return Err(Error::Diverged { epoch: epochs, detail: "non-finite parameters".into() });
        }
        Ok(())
    }
}

fn zero_masked(t: &mut Tensor<f64>, alive: &[bool]) {
    if alive.iter().all(|a| *a) {
        return;
    }
    let data: Vec<f64> = t.data().iter().zip(alive).map(|(v, a)| if *a { *v } else { 0.0 }).collect();
    *t = Tensor::new(t.shape().to_vec(), data).expect("same shape");
}

/// Mean |w * x_i| over a calibration batch of upstream values.
pub fn connection_contribution(w: f64, upstream: &[f64]) -> f64 {
    if upstream.is_empty() {
        return 0.0;
    }
    upstream.iter().map(|x| (w * x).abs()).sum::<f64>() / upstream.len() as f64
}

/// Mask the `ceil(k * alive)` weakest connections of every layer that is
/// above its floor, never going below the floor. Returns how many were cut.
pub fn prune_connections(net: &mut EqlNet, calib: &[Vec<f64>], k: f64, floors: &[usize]) -> Result<usize> {
    if calib.is_empty() {
        return Err(Error::InvalidArgument("empty calibration batch".into()));
    }
    if !(k > 0.0 && k < 1.0) || floors.len() != net.layers.len() {
        return Err(Error::InvalidArgument(format!("prune fraction {k}, {} floors", floors.len())));
    }
    let traces: Vec<[Vec<f64>; 3]> = calib.iter().map(|x| net.trace(x).0).collect();
    let mut cut = 0;
    for l in 0..net.layers.len() {
        let rem = net.masks[l].alive();
        if rem == 0 || rem <= floors[l] {
            continue;
        }
        let mut n = (k * rem as f64).ceil() as usize;
        if n >= rem && floors[l] == 0 {
            return Err(Error::LayerFullyPruned(l));
        }
        n = n.min(rem - floors[l]);
        let layer = &net.layers[l];
        let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
        // (score, flat index); biases come after the weights.
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(rem);
        let mut upstream = vec![0.0; traces.len()];
        for i in 0..fan_in {
            for (s, t) in traces.iter().enumerate() {
                upstream[s] = t[l][i];
            }
            for j in 0..fan_out {
                let idx = i * fan_out + j;
                if net.masks[l].weight[idx] {
                    scored.push((connection_contribution(layer.weight.get(i, j), &upstream), idx));
                }
            }
        }
        for j in 0..fan_out {
            if net.masks[l].bias[j] {
                scored.push((layer.bias.get(0, j).abs(), fan_in * fan_out + j));
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, idx) in &scored[..n] {
            if idx < fan_in * fan_out {
                net.masks[l].weight[idx] = false;
            } else {
                net.masks[l].bias[idx - fan_in * fan_out] = false;
            }
        }
        cut += n;
    }
    net.apply_masks();
    Ok(cut)
}

/// One pruning step followed by `retrain_epochs` of masked training.
pub fn prune_round<R: Rng + ?Sized>(net: &mut EqlNet, train: &Dataset, rng: &mut R) -> Result<usize> {
    let k = net.spec.prune_fraction;
    prune_round_with(net, train, k, rng)
}

fn prune_round_with<R: Rng + ?Sized>(net: &mut EqlNet, train: &Dataset, k: f64, rng: &mut R) -> Result<usize> {
    let floors = net.floors();
    let cut = prune_connections(net, &train.x, k, &floors)?;
    if cut > 0 {
        let epochs = net.spec.retrain_epochs;
        net.train(train, epochs, rng)?;
    }
    Ok(cut)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStop {
    ReachedSparsity,
    /// The last round pushed validation MSE past the stop factor and was undone.
    MseExceeded,
    /// Every layer sits at its floor.
    AtFloors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub sparsity: f64,
    pub val_mse: f64,
    pub alive_per_layer: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneHistory {
    pub baseline_mse: f64,
    /// Entry 0 is the dense network after initial training.
    pub rounds: Vec<RoundRecord>,
    pub stop: PruneStop,
}

/// Validation MSE of a plain ReLU network on the seeded 80-20 split.
pub fn fit_baseline(data: &Dataset, seed: u64) -> Result<f64> {
    if data.len() < 50 {
        return Err(Error::InvalidArgument(format!("{} rows; the baseline needs at least 50", data.len())));
    }
    let (train, val) = data.split(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba5e);
    let widths = [data.n_inputs(), BASELINE_WIDTH, BASELINE_WIDTH, 1];
    let mut mlp = Mlp::new(&widths, &[Activation::Relu, Activation::Relu, Activation::Identity], &mut rng)?;
    let x = Tensor::from_rows(&train.x)?;
    let y = Tensor::matrix(train.len(), 1, train.y.clone())?;
    let mut params = mlp.params();
    let mut adam = AdamState::new(&params, BASELINE_LR);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..BASELINE_EPOCHS {
        order.shuffle(&mut rng);
        for batch in order.chunks(32) {
            let step = (|| -> Result<Vec<Tensor<f64>>> {
                let mut tape = Tape::new();
                let vars = params.iter().map(|p| tape.param(p.clone())).collect::<Result<Vec<_>>>()?;
                let xb = tape.constant(x.select_rows(batch))?;
                let yb = tape.constant(y.select_rows(batch))?;
                let out = mlp.forward(&mut tape, &vars, xb)?;
                let loss = tape.mse(out, yb)?;
                let g = tape.backward(loss)?;
                vars.iter().map(|v| g.wrt(*v).cloned()).collect()
            })();
            let grads = step.map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            params = adam.step(&params, &grads).map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
        }
    }
    mlp.set_params(params)?;
    let pred = mlp.forward_eval(&Tensor::from_rows(&val.x)?)?;
    let mse = pred.data().iter().zip(&val.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / val.len() as f64;
    if !mse.is_finite() {
        return Err(Error::Diverged { epoch: BASELINE_EPOCHS, detail: "baseline validation MSE".into() });
    }
    Ok(mse)
}

/// Dense training, then prune-and-retrain rounds until the target sparsity,
/// the floors, or a validation MSE above `stop_factor` times the baseline.
pub fn train_prune_loop(spec: EqlSpec, data: &Dataset, baseline_mse: f64) -> Result<(EqlNet, PruneHistory)> {
    if data.n_inputs() != spec.n_inputs {
        return Err(Error::Shape(format!("dataset has {} inputs, network {}", data.n_inputs(), spec.n_inputs)));
    }
    let (train, val) = data.split(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut net = EqlNet::new(spec, &mut rng)?;
    let epochs = net.spec.epochs;
    net.train(&train, epochs, &mut rng)?;
    let record = |n: &EqlNet| RoundRecord {
        sparsity: n.sparsity(),
        val_mse: n.mse(&val),
        alive_per_layer: n.masks.iter().map(LayerMask::alive).collect(),
    };
    let mut rounds = vec![record(&net)];
    let limit = baseline_mse * net.spec.stop_factor;
    let mut k = net.spec.prune_fraction;
    let stop = loop {
        if net.sparsity() >= net.spec.target_sparsity {
            break PruneStop::ReachedSparsity;
        }
        let snapshot = net.clone();
        if prune_round_with(&mut net, &train, k, &mut rng)? == 0 {
            break PruneStop::AtFloors;
        }
        let mut r = record(&net);
        let mut extra = 0;
        while r.val_mse > limit && extra < net.spec.recovery_rounds {
            let epochs = net.spec.retrain_epochs;
            net.train(&train, epochs, &mut rng)?;
            r = record(&net);
            extra += 1;
        }
        log::debug!("prune: sparsity {:.3} val mse {:.3e} (limit {limit:.3e}, {extra} extra)", r.sparsity, r.val_mse);
        if r.val_mse > limit {
            net = snapshot;
            if k > SINGLE_CUT {
                // Retry the round cutting one connection per layer.
                k = SINGLE_CUT;
                continue;
            }
            break PruneStop::MseExceeded;
        }
        k = net.spec.prune_fraction;
        rounds.push(r);
    };
    Ok((net, PruneHistory { baseline_mse, rounds, stop }))
}
