use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Activation, Tape, Var};
use super::tensor::Tensor;

/// Fully connected layer `y = x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-a..a))).collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, w).expect("xavier dims"),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Multi-layer perceptron with one activation per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub activations: Vec<Activation>,
}

impl<T: Scalar> Mlp<T> {
    /// `widths` lists every layer size including input and output.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = widths.windows(2).map(|w| Dense::xavier(w[0], w[1], rng)).collect();
        Ok(Self { layers, activations: activations.to_vec() })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::fan_out)
    }

    /// Flattened parameters, `[W0, b0, W1, b1, ...]`.
    pub fn params(&self) -> Vec<Tensor<T>> {
        self.layers.iter().flat_map(|l| [l.weight.clone(), l.bias.clone()]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Replace parameters from the flattened layout returned by [`Mlp::params`].
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != 2 * self.layers.len() {
            return Err(Error::Shape(format!("{} tensors for {} layers", params.len(), self.layers.len())));
        }
        let mut it = params.into_iter();
        for l in &mut self.layers {
            let (w, b) = (it.next().expect("len checked"), it.next().expect("len checked"));
            if w.shape() != l.weight.shape() || b.shape() != l.bias.shape() {
                return Err(Error::Shape(format!(
                    "layer expects {:?}/{:?}, got {:?}/{:?}",
                    l.weight.shape(),
                    l.bias.shape(),
                    w.shape(),
                    b.shape()
                )));
            }
            l.weight = w.with_requires_grad(false);
            l.bias = b.with_requires_grad(false);
        }
        Ok(())
    }

    /// Record the parameters on `tape` as gradient-carrying leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params().into_iter().map(|p| tape.param(p)).collect()
    }

    /// Forward pass through parameters already bound on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, params: &[Var], x: Var) -> Result<Var> {
        let width = tape.value(x)?.cols();
        if width != self.input_dim() {
            return Err(Error::Shape(format!("input width {width}, network expects {}", self.input_dim())));
        }
        let mut h = x;
        for (k, act) in self.activations.iter().enumerate() {
            let z = tape.matmul(h, params[2 * k])?;
            let z = tape.add_row(z, params[2 * k + 1])?;
            h = if *act == Activation::Identity { z } else { tape.unary(z, *act)? };
        }
        Ok(h)
    }

    /// Evaluate on a batch without keeping a tape around.
    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect::<Result<_>>()?;
        let x = tape.constant(input.clone())?;
        let y = self.forward(&mut tape, &params, x)?;
        Ok(tape.value(y)?.clone())
    }
}
