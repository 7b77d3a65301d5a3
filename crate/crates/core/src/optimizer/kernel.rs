use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Isotropic Matern 5/2 hyperparameters.
///
/// `noise_var` is additive observation noise; zero gives an interpolating
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    pub signal_var: T,
    pub lengthscale: T,
    pub noise_var: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(signal_var: T, lengthscale: T, noise_var: T) -> Result<Self> {
        let p = Self { signal_var, lengthscale, noise_var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.signal_var > T::zero()
            && self.lengthscale > T::zero()
            && self.noise_var >= T::zero()
            && self.signal_var.is_finite()
            && self.lengthscale.is_finite()
            && self.noise_var.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("kernel parameters out of range: {self:?}")))
        }
    }

    /// Covariance between two points.
    pub fn cov(&self, a: &[T], b: &[T]) -> T {
        matern52(distance(a, b), self)
    }
}

/// Unit-variance Matern 5/2 correlation at scaled distance `s = r / l`.
#[inline]
pub fn matern52_corr<T: Scalar>(s: T) -> T {
    let root5 = T::lit(5.0f64.sqrt());
    let a = root5 * s;
    (T::one() + a + a * a / T::lit(3.0)) * (-a).exp()
}

/// `s2 (1 + sqrt5 r/l + 5 r^2 / (3 l^2)) exp(-sqrt5 r/l)`
#[inline]
pub fn matern52<T: Scalar>(r: T, p: &KernelParams<T>) -> T {
    p.signal_var * matern52_corr(r / p.lengthscale)
}

#[inline]
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}
