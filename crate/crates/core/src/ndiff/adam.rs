use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Adam optimizer state: one pair of moment tensors per parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Moments shaped after `params`, default betas and epsilon.
    pub fn new(params: &[Tensor<T>], lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn with_default_lr(params: &[Tensor<T>]) -> Self {
        Self::new(params, T::lit(1e-3))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Inputs are left untouched; the updated
    /// parameters are returned.
    pub fn step(&mut self, params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(Error::Shape(format!(
                    "adam slot {k}: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[k].shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient slot {k}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let step_size = self.lr / bc1;
        let one = T::one();
        let mut out = Vec::with_capacity(params.len());
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            let mut np = p.clone();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((pv, &gv), mv), vv) in np.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = self.beta1 * *mv + (one - self.beta1) * gv;
                *vv = self.beta2 * *vv + (one - self.beta2) * gv * gv;
                let denom = (*vv / bc2).sqrt() + self.eps;
                *pv = *pv - step_size * *mv / denom;
            }
            out.push(np);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let p = vec![Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::zeros(&[1, 3])];
        let mut adam = AdamState::with_default_lr(&p);
        let q = adam.step(&p, &g).unwrap();
        assert_eq!(q, p);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // m_hat = 1, v_hat = 1 after bias correction: delta = lr / (1 + eps)
        let p = vec![Tensor::scalar(0.3f64)];
        let g = vec![Tensor::scalar(1.0)];
        let mut adam = AdamState::with_default_lr(&p);
        let q = adam.step(&p, &g).unwrap();
        let expected = 0.3 - 0.001 / (1.0 + 1e-8);
        assert!((q[0].item().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = vec![Tensor::<f64>::zeros(&[2, 2])];
        let mut adam = AdamState::with_default_lr(&p);
        assert!(adam.step(&p, &[Tensor::zeros(&[2, 3])]).is_err());
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()];
            let mut adam = AdamState::with_default_lr(&p);
            for _ in 0..50 {
                let g = vec![p[0].map(|v| 2.0 * v - 1.0)];
                p = adam.step(&p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
