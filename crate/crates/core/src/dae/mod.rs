//! Directional autoencoder: a deterministic autoencoder whose designated
//! latent coordinates are pushed to order the data like chosen attributes.

mod attributes;
mod distilled;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Activation, AdamState, Mlp, Tape, Tensor, Var};
use crate::vae::{smoothed_monotone, Normalizer, VaeSpec};

pub use attributes::{
    average_ranks, dist_loss, dominant_frequency, extract_attribute, savgol, sgn, spearman, Attribute, DFT_NOISE_FLOOR,
};
pub use distilled::{DistilledDataset, DistilledRow};
pub(crate) use distilled::csv_err;

/// Spearman threshold below which a regularized pair is flagged.
pub const MIN_SPEARMAN: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// `(latent index, attribute)`; each latent index appears at most once.
    pub pairs: Vec<(usize, Attribute)>,
    pub gamma: f64,
}

impl DaeSpec {
    pub fn validate(&self) -> Result<()> {
        VaeSpec { input_dim: self.input_dim, latent_dim: self.latent_dim, hidden: self.hidden.clone() }.validate()?;
        for (k, &(l, _)) in self.pairs.iter().enumerate() {
            if l >= self.latent_dim {
                return Err(Error::InvalidArgument(format!("latent index {l} out of range {}", self.latent_dim)));
            }
            if self.pairs[..k].iter().any(|&(m, _)| m == l) {
                return Err(Error::InvalidArgument(format!("latent index {l} regularized twice")));
            }
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma {}", self.gamma)));
        }
        Ok(())
    }

    fn widths(&self) -> (Vec<usize>, Vec<usize>) {
        let v = VaeSpec { input_dim: self.input_dim, latent_dim: self.latent_dim, hidden: self.hidden.clone() };
        let mut enc = v.encoder_widths();
        *enc.last_mut().expect("nonempty") = self.latent_dim;
        (enc, v.decoder_widths())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dae {
    pub spec: DaeSpec,
    pub encoder: Mlp<f64>,
    pub decoder: Mlp<f64>,
    pub normalizer: Normalizer,
}

impl Dae {
    pub fn encode_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let norm = xs.iter().map(|x| self.normalizer.apply(x)).collect::<Result<Vec<_>>>()?;
        let z = self.encoder.forward_eval(&Tensor::from_rows(&norm)?)?;
        Ok((0..z.rows()).map(|i| z.row(i).to_vec()).collect())
    }

    /// Per-component reconstruction MSE in normalized units.
    pub fn reconstruction_mse(&self, xs: &[Vec<f64>]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let norm = xs.iter().map(|x| self.normalizer.apply(x)).collect::<Result<Vec<_>>>()?;
        let x = Tensor::from_rows(&norm)?;
        let r = self.decoder.forward_eval(&self.encoder.forward_eval(&x)?)?;
        let s: f64 = x.data().iter().zip(r.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(s / x.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DaeTrainConfig {
    fn default() -> Self {
        Self { epochs: 500, batch_size: 64, lr: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeReport {
    /// Per-epoch (total, reconstruction, distance) item-mean losses.
    pub history: Vec<(f64, f64, f64)>,
    /// Spearman correlation of each regularized pair on the training data.
    pub spearman: Vec<f64>,
    /// Some pair fell below [`MIN_SPEARMAN`].
    pub flagged: bool,
    pub smoothed_monotone: bool,
}

/// Minibatch loss graph: summed squared reconstruction error per item plus
/// `gamma` times the pairwise distance loss over all ordered pairs.
pub(crate) fn dae_graph(
    tape: &mut Tape<f64>,
    dae: &Dae,
    vars: &[Var],
    x: Var,
    signs: &[Tensor<f64>],
) -> Result<(Var, Var, Var)> {
    let n_enc = 2 * dae.encoder.layers.len();
    let b = tape.value(x)?.rows();
    let z = dae.encoder.forward(tape, &vars[..n_enc], x)?;
    let recon = dae.decoder.forward(tape, &vars[n_enc..], z)?;
    let mse = tape.mse(recon, x)?;
    let rec = tape.scale(mse, dae.spec.input_dim as f64)?;
    let mut dist: Option<Var> = None;
    for (&(l, _), sign) in dae.spec.pairs.iter().zip(signs) {
        let col = tape.columns(z, l, l + 1)?;
        let dz = tape.pairwise_diff(col)?;
        let t = tape.unary(dz, Activation::Tanh)?;
        let target = tape.constant(sign.clone())?;
        // mse averages over b^2 entries; the diagonal is identically zero.
        let m = tape.mse(t, target)?;
        let m = tape.scale(m, (b * b) as f64 / (b * (b - 1)) as f64)?;
        dist = Some(match dist {
            Some(acc) => tape.add(acc, m)?,
            None => m,
        });
    }
    let dist = match dist {
        Some(d) => d,
        None => tape.constant(Tensor::scalar(0.0))?,
    };
    let weighted = tape.scale(dist, dae.spec.gamma)?;
    let loss = tape.add(rec, weighted)?;
    Ok((loss, rec, dist))
}

fn sign_matrix(batch: &[usize], col: &[f64]) -> Tensor<f64> {
    let b = batch.len();
    let data = batch.iter().flat_map(|&i| batch.iter().map(move |&j| sgn(col[i] - col[j]))).collect();
    Tensor::matrix(b, b, data).expect("square")
}

/// Train on physical-unit experiments; `attrs[k][i]` is the attribute of
/// `spec.pairs[k]` for experiment `i`.
pub fn train_dae(spec: DaeSpec, xs: &[Vec<f64>], attrs: &[Vec<f64>], cfg: &DaeTrainConfig) -> Result<(Dae, DaeReport)> {
    spec.validate()?;
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("{} experiments; need at least 2", xs.len())));
    }
    if attrs.len() != spec.pairs.len() || attrs.iter().any(|a| a.len() != xs.len()) {
        return Err(Error::Shape("one attribute column per regularized pair, one value per experiment".into()));
    }
    if xs[0].len() != spec.input_dim {
        return Err(Error::Shape(format!("experiments of length {}, spec expects {}", xs[0].len(), spec.input_dim)));
    }
    if cfg.batch_size < 2 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("batch size {} / lr {}", cfg.batch_size, cfg.lr)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ew, dw) = spec.widths();
    let encoder = Mlp::new(&ew, &VaeSpec::activations(ew.len() - 1, Activation::Identity), &mut rng)?;
    let decoder = Mlp::new(&dw, &VaeSpec::activations(dw.len() - 1, Activation::Identity), &mut rng)?;
    let normalizer = Normalizer::fit(xs)?;
    let mut dae = Dae { spec, encoder, decoder, normalizer };
    let data = Tensor::from_rows(&xs.iter().map(|x| dae.normalizer.apply(x)).collect::<Result<Vec<_>>>()?)?;

    let n_enc = 2 * dae.encoder.layers.len();
    let mut params = dae.encoder.params();
    params.extend(dae.decoder.params());
    let mut adam = AdamState::new(&params, cfg.lr);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            // A singleton tail has no pairs; fold it into the next epoch.
            if batch.len() < 2 {
                continue;
            }
            let signs: Vec<Tensor<f64>> = attrs.iter().map(|a| sign_matrix(batch, a)).collect();
            let step = (|| -> Result<((f64, f64, f64), Vec<Tensor<f64>>)> {
                let mut tape = Tape::new();
                let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect::<Result<_>>()?;
                let x = tape.constant(data.select_rows(batch))?;
                let (loss, rec, dist) = dae_graph(&mut tape, &dae, &vars, x, &signs)?;
                let lv = tape.value(loss)?.item()?;
                if !lv.is_finite() {
                    return Err(Error::NonFinite("loss".into()));
                }
                let g = tape.backward(loss)?;
                let grads = vars.iter().map(|v| g.wrt(*v).cloned()).collect::<Result<Vec<_>>>()?;
                Ok(((lv, tape.value(rec)?.item()?, tape.value(dist)?.item()?), grads))
            })();
            let (vals, grads) = step.map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            params = adam.step(&params, &grads).map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;
            let w = batch.len() as f64;
            sums = (sums.0 + vals.0 * w, sums.1 + vals.1 * w, sums.2 + vals.2 * w);
            seen += batch.len();
        }
        let n = seen.max(1) as f64;
        history.push((sums.0 / n, sums.1 / n, sums.2 / n));
    }

    let (enc, dec) = params.split_at(n_enc);
    dae.encoder.set_params(enc.to_vec())?;
    dae.decoder.set_params(dec.to_vec())?;

    let z = dae.encode_batch(xs)?;
    let mut rho = Vec::with_capacity(attrs.len());
    for (&(l, attr), a) in dae.spec.pairs.iter().zip(attrs) {
        let zl: Vec<f64> = z.iter().map(|r| r[l]).collect();
        let r = spearman(&zl, a)?;
        if r < MIN_SPEARMAN {
            log::warn!("latent {l} vs {attr}: spearman {r:.3} below {MIN_SPEARMAN}");
        }
        rho.push(r);
    }
    let flagged = rho.iter().any(|&r| r < MIN_SPEARMAN);
    let totals: Vec<f64> = history.iter().map(|h| h.0).collect();
    let monotone = smoothed_monotone(&totals, 10);
    Ok((dae, DaeReport { history, spearman: rho, flagged, smoothed_monotone: monotone }))
}

#[cfg(test)]
mod tests;
