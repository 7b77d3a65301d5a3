//! Variational autoencoder over experiment vectors.
//!
//! Inputs are min-max normalized per component before encoding; the decoder
//! ends in a ReLU so generated experiments are non-negative in normalized
//! units. [`Vae::decode`] maps back to physical units.

mod normalize;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::{Activation, Mlp, Tensor};

pub use normalize::Normalizer;
pub use train::{smoothed_monotone, train_vae, EpochStats, TrainReport, VaeTrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Layer plan of a VAE. The decoder mirrors `hidden` in reverse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
}

impl VaeSpec {
    pub fn new(input_dim: usize, latent_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let spec = Self { input_dim, latent_dim, hidden };
        spec.validate()?;
        Ok(spec)
    }

    /// 64 trajectory samples, two latent dimensions.
    pub fn projectile() -> Self {
        Self { input_dim: 64, latent_dim: 2, hidden: vec![64, 32] }
    }

    /// 864-sample pump patterns, widths halving down to four latent dimensions.
    pub fn pump_pattern() -> Self {
        Self { input_dim: 864, latent_dim: 4, hidden: vec![432, 216, 108, 54] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("zero width in {self:?}")));
        }
        if self.latent_dim >= self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "latent dim {} must be below input dim {}",
                self.latent_dim, self.input_dim
            )));
        }
        Ok(())
    }

    /// Encoder widths, ending in `2 * latent_dim` (means then log-variances).
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(2 * self.latent_dim);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend(self.hidden.iter().rev());
        w.push(self.input_dim);
        w
    }

    /// Leaky-ReLU hidden layers followed by `last`.
    pub(crate) fn activations(n_layers: usize, last: Activation) -> Vec<Activation> {
        let mut a = vec![Activation::LeakyRelu; n_layers - 1];
        a.push(last);
        a
    }
}

/// Trained (or freshly initialized) model with its input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vae {
    pub spec: VaeSpec,
    pub encoder: Mlp<f64>,
    pub decoder: Mlp<f64>,
    pub normalizer: Normalizer,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: Vae,
}

impl Vae {
    /// Xavier-initialized network with an identity normalizer.
    pub fn new<R: Rng + ?Sized>(spec: VaeSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let ew = spec.encoder_widths();
        let dw = spec.decoder_widths();
        let encoder = Mlp::new(&ew, &VaeSpec::activations(ew.len() - 1, Activation::Identity), rng)?;
        let decoder = Mlp::new(&dw, &VaeSpec::activations(dw.len() - 1, Activation::Relu), rng)?;
        let normalizer = Normalizer::identity(spec.input_dim);
        Ok(Self { spec, encoder, decoder, normalizer })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    /// Posterior mean and log-variance for one physical-unit experiment.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.encode_batch(std::slice::from_ref(&x.to_vec()))?;
        Ok(out.pop().expect("one row"))
    }

    pub fn encode_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let norm = xs.iter().map(|x| self.normalizer.apply(x)).collect::<Result<Vec<_>>>()?;
        let h = self.encoder.forward_eval(&Tensor::from_rows(&norm)?)?;
        if !h.is_finite() {
            return Err(Error::NonFinite("encoder".into()));
        }
        let d = self.spec.latent_dim;
        Ok((0..h.rows()).map(|i| (h.row(i)[..d].to_vec(), h.row(i)[d..].to_vec())).collect())
    }

    /// Posterior means only.
    pub fn encode_means(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.encode_batch(xs)?.into_iter().map(|(m, _)| m).collect())
    }

    /// Decoder output in normalized units; every component is >= 0.
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.generate_batch(std::slice::from_ref(&z.to_vec()))?.pop().expect("one row"))
    }

    pub fn generate_batch(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(z) = zs.iter().find(|z| z.len() != self.spec.latent_dim) {
            return Err(Error::Shape(format!("latent point of length {}, expected {}", z.len(), self.spec.latent_dim)));
        }
        if zs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("latent point is not finite".into()));
        }
        let out = self.decoder.forward_eval(&Tensor::from_rows(zs)?)?;
        Ok((0..out.rows()).map(|i| out.row(i).to_vec()).collect())
    }

    /// Decoder output mapped back to physical units.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.normalizer.invert(&self.generate(z)?)
    }

    pub fn decode_batch(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.generate_batch(zs)?.iter().map(|g| self.normalizer.invert(g)).collect()
    }

    /// Mean squared error per component, in normalized units, of decoding the
    /// posterior mean of each row.
    pub fn reconstruction_mse(&self, xs: &[Vec<f64>]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let means = self.encode_means(xs)?;
        let recon = self.generate_batch(&means)?;
        let mut s = 0.0;
        for (x, r) in xs.iter().zip(&recon) {
            let xn = self.normalizer.apply(x)?;
            s += xn.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(s / (xs.len() * self.spec.input_dim) as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint { version: CHECKPOINT_VERSION, model: self.clone() };
        std::fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", ck.version)));
        }
        ck.model.spec.validate()?;
        if ck.model.encoder.input_dim() != ck.model.spec.input_dim
            || ck.model.decoder.output_dim() != ck.model.spec.input_dim
            || ck.model.normalizer.dim() != ck.model.spec.input_dim
        {
            return Err(Error::Shape("checkpoint layers disagree with its spec".into()));
        }
        Ok(ck.model)
    }
}

/// `mean + exp(logvar / 2) * noise`.
pub fn reparameterize(mean: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mean.len() != logvar.len() || mean.len() != noise.len() {
        return Err(Error::Shape(format!("{} / {} / {}", mean.len(), logvar.len(), noise.len())));
    }
    Ok(mean.iter().zip(logvar).zip(noise).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect())
}

/// KL divergence of N(mean, exp(logvar)) from the unit Gaussian.
pub fn kl_term(mean: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mean.iter().zip(logvar).map(|(m, lv)| 1.0 + lv - m * m - lv.exp()).sum::<f64>()
}

/// Squared reconstruction error summed over components.
pub fn reconstruction_term(x: &[f64], recon: &[f64]) -> f64 {
    x.iter().zip(recon).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Negative ELBO of one item: Gaussian reconstruction error plus KL.
pub fn elbo_loss(x: &[f64], recon: &[f64], mean: &[f64], logvar: &[f64]) -> Result<f64> {
    if x.len() != recon.len() || mean.len() != logvar.len() {
        return Err(Error::Shape(format!("x {} recon {} mean {} logvar {}", x.len(), recon.len(), mean.len(), logvar.len())));
    }
    Ok(reconstruction_term(x, recon) + kl_term(mean, logvar))
}
