use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component min-max scaling to [0, 1]. Components that never vary keep
/// a unit scale so they map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
        let d = first.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Shape(format!("row {i} has length {}, expected {d}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("row {i} component {j} is not finite")));
                }
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let scale = lo.iter().zip(&hi).map(|(l, h)| if h - l > 1e-12 { h - l } else { 1.0 }).collect();
        Ok(Self { lo, scale })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter().zip(&self.lo).zip(&self.scale).map(|((v, l), s)| (v - l) / s).collect())
    }

    pub fn invert(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.iter().zip(&self.lo).zip(&self.scale).map(|((v, l), s)| v * s + l).collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("vector of length {}, expected {}", x.len(), self.dim())));
        }
        Ok(())
    }
}
