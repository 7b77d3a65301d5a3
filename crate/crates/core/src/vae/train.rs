use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Activation, AdamState, Tape, Tensor, Var};

use super::{Normalizer, Vae, VaeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop once an epoch's mean per-component reconstruction error
    /// (normalized units) falls to this value.
    pub target_recon: Option<f64>,
    /// Scale on the summed squared error, i.e. the precision `1 / (2 sigma^2)`
    /// of the Gaussian likelihood, in normalized units.
    pub recon_weight: f64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self { epochs: 1000, batch_size: 128, lr: 1e-3, seed: 0, target_recon: None, recon_weight: 1.0 }
    }
}

/// Per-epoch averages over the minibatches. `recon` is per component,
/// `loss` and `kl` are per item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub reached_target: bool,
    /// False when the mean loss of a 10-epoch block ever exceeded the previous block's.
    pub smoothed_monotone: bool,
}

/// Means of consecutive, non-overlapping blocks of `w` entries never increase.
/// A trailing partial block is ignored.
pub fn smoothed_monotone(xs: &[f64], w: usize) -> bool {
    let avg: Vec<f64> = xs.chunks_exact(w.max(1)).map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    avg.windows(2).all(|p| p[1] <= p[0])
}

/// Records the batch-mean negative ELBO for `x` (normalized units) with the
/// given unit-normal `noise`, with the squared error scaled by `recon_weight`.
/// `vars` holds encoder then decoder parameters. Returns (loss,
/// per-component reconstruction MSE, KL per item).
pub(crate) fn elbo_graph(
    tape: &mut Tape<f64>,
    vae: &Vae,
    vars: &[Var],
    x: Var,
    noise: Var,
    recon_weight: f64,
) -> Result<(Var, Var, Var)> {
    let d = vae.spec.latent_dim;
    let n_enc = 2 * vae.encoder.layers.len();
    let b = tape.value(x)?.rows();
    let h = vae.encoder.forward(tape, &vars[..n_enc], x)?;
    let mean = tape.columns(h, 0, d)?;
    let logvar = tape.columns(h, d, 2 * d)?;
    let half = tape.scale(logvar, 0.5)?;
    let std = tape.unary(half, Activation::Exp)?;
    let spread = tape.mul(std, noise)?;
    let z = tape.add(mean, spread)?;
    let recon = vae.decoder.forward(tape, &vars[n_enc..], z)?;
    let mse = tape.mse(recon, x)?;
    let rec = tape.scale(mse, recon_weight * vae.spec.input_dim as f64)?;
    let m2 = tape.unary(mean, Activation::Square)?;
    let ev = tape.unary(logvar, Activation::Exp)?;
    let t = tape.add(m2, ev)?;
    let t = tape.sub(t, logvar)?;
    let s = tape.sum(t)?;
    let kl = tape.scale(s, 0.5 / b as f64)?;
    let offset = tape.constant(Tensor::scalar(-0.5 * d as f64))?;
    let kl = tape.add(kl, offset)?;
    let loss = tape.add(rec, kl)?;
    Ok((loss, mse, kl))
}

/// Train a fresh VAE on physical-unit rows with minibatch Adam on the
/// negative ELBO (summed squared error plus KL, averaged over the batch).
pub fn train_vae(spec: VaeSpec, rows: &[Vec<f64>], cfg: &VaeTrainConfig) -> Result<(Vae, TrainReport)> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.recon_weight > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "batch size {} / lr {} / reconstruction weight {}",
            cfg.batch_size, cfg.lr, cfg.recon_weight
        )));
    }
    if rows[0].len() != spec.input_dim {
        return Err(Error::Shape(format!("rows of length {}, spec expects {}", rows[0].len(), spec.input_dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vae = Vae::new(spec, &mut rng)?;
    vae.normalizer = Normalizer::fit(rows)?;
    let data = Tensor::from_rows(&rows.iter().map(|r| vae.normalizer.apply(r)).collect::<Result<Vec<_>>>()?)?;

    let d = vae.spec.latent_dim;
    let n_enc = 2 * vae.encoder.layers.len();
    let mut params = vae.encoder.params();
    params.extend(vae.decoder.params());
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut reached = false;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut rec_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let noise: Vec<f64> = (0..b * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let step = (|| -> Result<(f64, f64, f64, Vec<Tensor<f64>>)> {
                let mut tape = Tape::new();
                let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect::<Result<_>>()?;
                let x = tape.constant(data.select_rows(batch))?;
                let eps = tape.constant(Tensor::matrix(b, d, noise.clone())?)?;
                let (loss, mse, kl) = elbo_graph(&mut tape, &vae, &vars, x, eps, cfg.recon_weight)?;
                let lv = tape.value(loss)?.item()?;
                if !lv.is_finite() {
                    return Err(Error::NonFinite("loss".into()));
                }
                let g = tape.backward(loss)?;
                let grads = vars.iter().map(|v| g.wrt(*v).cloned()).collect::<Result<Vec<_>>>()?;
                Ok((lv, tape.value(mse)?.item()?, tape.value(kl)?.item()?, grads))
            })();
            let (lv, mse, kl, grads) = step.map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            params = adam.step(&params, &grads).map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            loss_sum += lv * b as f64;
            rec_sum += mse * b as f64;
            kl_sum += kl * b as f64;
        }
        let n = data.rows() as f64;
        let stats = EpochStats { loss: loss_sum / n, recon: rec_sum / n, kl: kl_sum / n };
        log::debug!("vae epoch {epoch}: loss {:.5} recon {:.3e} kl {:.4}", stats.loss, stats.recon, stats.kl);
        history.push(stats);
        if cfg.target_recon.is_some_and(|t| stats.recon <= t) {
            reached = true;
            break;
        }
    }

    let (enc, dec) = params.split_at(n_enc);
    vae.encoder.set_params(enc.to_vec())?;
    vae.decoder.set_params(dec.to_vec())?;
    let losses: Vec<f64> = history.iter().map(|h| h.loss).collect();
    let monotone = smoothed_monotone(&losses, 10);
    if !monotone {
        log::warn!("vae loss is not monotone under a 10-epoch moving average");
    }
    Ok((vae, TrainReport { history, reached_target: reached, smoothed_monotone: monotone }))
}
