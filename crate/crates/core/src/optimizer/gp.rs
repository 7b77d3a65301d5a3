use log::debug;

use super::kernel::{distance, matern52, matern52_corr, KernelParams};
use super::ExperimentRecord;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};
use crate::scalar::Scalar;

/// Relative diagonal jitter ladder tried when factoring the covariance.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Gaussian-process regressor with a constant prior mean.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    inputs: Vec<Vec<T>>,
    targets: Vec<T>,
    params: KernelParams<T>,
    prior_mean: T,
    jitter: T,
    chol: Cholesky<T>,
    alpha: Vec<T>,
}

/// Outcome of a marginal-likelihood hyperparameter search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperFit<T> {
    pub params: KernelParams<T>,
    pub prior_mean: T,
    /// True when the likelihood was degenerate and the median-distance
    /// heuristic supplied the lengthscale.
    pub fallback: bool,
}

impl<T: Scalar> GpModel<T> {
    /// Condition the prior on `records`.
    pub fn fit(records: &[ExperimentRecord<T>], params: KernelParams<T>, prior_mean: T) -> Result<Self> {
        params.validate()?;
        if records.is_empty() {
            return Err(Error::InvalidArgument("gp needs at least one record".into()));
        }
        let d = records[0].z.len();
        for r in records {
            if r.z.len() != d {
                return Err(Error::Shape(format!("record dim {} vs {d}", r.z.len())));
            }
            if !r.y.is_finite() || r.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gp training record".into()));
            }
        }
        let inputs: Vec<Vec<T>> = records.iter().map(|r| r.z.clone()).collect();
        let targets: Vec<T> = records.iter().map(|r| r.y).collect();
        let (chol, jitter) = factor_with_jitter(&inputs, &params)?;
        let resid: Vec<T> = targets.iter().map(|&y| y - prior_mean).collect();
        let alpha = chol.solve(&resid);
        Ok(Self { inputs, targets, params, prior_mean, jitter, chol, alpha })
    }

    pub fn params(&self) -> &KernelParams<T> {
        &self.params
    }

    pub fn prior_mean(&self) -> T {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    /// Diagonal value added to the covariance, including noise and jitter.
    pub fn diag_extra(&self) -> T {
        self.params.noise_var + self.jitter * self.params.signal_var
    }

    /// Append one observation without refitting hyperparameters. Extends the
    /// factor in O(n^2); falls back to a full refactor if the extension is
    /// numerically singular.
    pub fn push(&mut self, z: Vec<T>, y: T) -> Result<()> {
        if z.len() != self.inputs[0].len() {
            return Err(Error::Shape(format!("record dim {} vs {}", z.len(), self.inputs[0].len())));
        }
        if !y.is_finite() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gp training record".into()));
        }
        let cross: Vec<T> = self.inputs.iter().map(|x| self.params.cov(x, &z)).collect();
        let diag = self.params.signal_var + self.diag_extra();
        self.inputs.push(z);
        self.targets.push(y);
        if !self.chol.extend(&cross, diag) {
            let (chol, jitter) = factor_with_jitter(&self.inputs, &self.params)?;
            self.chol = chol;
            self.jitter = jitter;
        }
        let resid: Vec<T> = self.targets.iter().map(|&t| t - self.prior_mean).collect();
        self.alpha = self.chol.solve(&resid);
        Ok(())
    }

    /// Posterior mean and standard deviation of the latent function at `z`.
    pub fn posterior(&self, z: &[T]) -> (T, T) {
        let k: Vec<T> = self.inputs.iter().map(|x| self.params.cov(x, z)).collect();
        let mean = self.prior_mean + dot(&k, &self.alpha);
        let v = self.chol.solve_lower(&k);
        let var = self.params.signal_var - dot(&v, &v);
        (mean, var.max(T::zero()).sqrt())
    }

    /// Posterior at many points using one multi-RHS triangular solve.
    pub fn posterior_many(&self, zs: &[Vec<T>]) -> Vec<(T, T)> {
        let n = self.len();
        let m = zs.len();
        if m == 0 {
            return Vec::new();
        }
        let kc = Mat::from_fn(n, m, |i, j| self.params.cov(&self.inputs[i], &zs[j]));
        let v = self.chol.solve_lower_many(&kc);
        let mut mean = vec![self.prior_mean; m];
        let mut sq = vec![T::zero(); m];
        for i in 0..n {
            let (krow, vrow) = (kc.row(i), v.row(i));
            let a = self.alpha[i];
            for j in 0..m {
                mean[j] = mean[j] + krow[j] * a;
                sq[j] = sq[j] + vrow[j] * vrow[j];
            }
        }
        mean.into_iter()
            .zip(sq)
            .map(|(mu, s)| (mu, (self.params.signal_var - s).max(T::zero()).sqrt()))
            .collect()
    }

    /// Upper bound on the posterior sd at `z`: the sd after conditioning on
    /// the `k` nearest training inputs only. Conditioning on more data never
    /// increases the variance, so this dominates [`posterior`](Self::posterior).
    pub fn local_sd_bound(&self, z: &[T], k: usize) -> T {
        let n = self.len();
        let mut idx: Vec<(T, usize)> = self.inputs.iter().enumerate().map(|(i, x)| (distance(x, z), i)).collect();
        let k = k.clamp(1, n);
        if k < n {
            idx.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            idx.truncate(k);
        }
        let extra = self.diag_extra();
        let sub = Mat::from_fn(k, k, |a, b| {
            let c = self.params.cov(&self.inputs[idx[a].1], &self.inputs[idx[b].1]);
            if a == b { c + extra } else { c }
        });
        let cross: Vec<T> = idx.iter().map(|&(r, _)| matern52(r, &self.params)).collect();
        let var = match Cholesky::factor(&sub) {
            Some(c) => {
                let v = c.solve_lower(&cross);
                self.params.signal_var - dot(&v, &v)
            }
            None => {
                // single nearest point
                let kmax = cross.iter().copied().fold(T::zero(), T::max);
                self.params.signal_var - kmax * kmax / (self.params.signal_var + extra)
            }
        };
        var.max(T::zero()).sqrt()
    }

    /// Posterior means only; O(n) per point.
    pub fn mean_many(&self, zs: &[Vec<T>]) -> Vec<T> {
        zs.iter()
            .map(|z| {
                let s: T = self.inputs.iter().zip(&self.alpha).map(|(x, &a)| self.params.cov(x, z) * a).sum();
                self.prior_mean + s
            })
            .collect()
    }
}

fn factor_with_jitter<T: Scalar>(inputs: &[Vec<T>], params: &KernelParams<T>) -> Result<(Cholesky<T>, T)> {
    let n = inputs.len();
    let mut k = Mat::from_fn(n, n, |i, j| if i <= j { params.cov(&inputs[i], &inputs[j]) } else { T::zero() });
    for i in 0..n {
        for j in 0..i {
            let v = k.get(j, i);
            k.set(i, j, v);
        }
    }
    let base: Vec<T> = (0..n).map(|i| k.get(i, i) + params.noise_var).collect();
    for &rel in &JITTER_LADDER {
        let jitter = T::lit(rel);
        for (i, &b) in base.iter().enumerate() {
            k.set(i, i, b + jitter * params.signal_var);
        }
        if let Some(c) = Cholesky::factor(&k) {
            return Ok((c, jitter));
        }
        debug!("covariance not positive definite at jitter {rel:e}");
    }
    Err(Error::SingularCovariance { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

/// Median of all pairwise distances; 1 when undefined.
pub fn median_pairwise_distance<T: Scalar>(inputs: &[Vec<T>]) -> T {
    let mut d: Vec<T> = Vec::new();
    for i in 0..inputs.len() {
        for j in 0..i {
            d.push(distance(&inputs[i], &inputs[j]));
        }
    }
    if d.is_empty() {
        return T::one();
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = d[d.len() / 2];
    if m > T::zero() { m } else { T::one() }
}

/// Profiled log marginal likelihood at lengthscale `ell`; the signal
/// variance is eliminated analytically. Returns `(loglik, signal_var)`.
fn profiled_loglik<T: Scalar>(inputs: &[Vec<T>], resid: &[T], ell: T, noise_ratio: T) -> Option<(T, T)> {
    let n = inputs.len();
    let mut r = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = matern52_corr(distance(&inputs[i], &inputs[j]) / ell);
            r.set(i, j, c);
            r.set(j, i, c);
        }
    }
    for &rel in &JITTER_LADDER {
        for i in 0..n {
            r.set(i, i, T::one() + noise_ratio + T::lit(rel));
        }
        if let Some(c) = Cholesky::factor(&r) {
            let w = c.solve_lower(resid);
            let q = dot(&w, &w);
            let nf = T::from_usize_lossy(n);
            let s2 = q / nf;
            if !(s2 > T::zero()) {
                return None;
            }
            let ll = -T::lit(0.5) * (nf * s2.ln() + c.log_det());
            return ll.is_finite().then_some((ll, s2));
        }
    }
    None
}

/// Maximize the marginal likelihood over the lengthscale with the signal
/// variance profiled out and a constant prior mean equal to the sample mean.
///
/// `noise_ratio` is the noise variance as a fraction of the signal variance.
/// At most `max_points` records (strided) enter the fit.
pub fn fit_hyperparameters<T: Scalar>(
    records: &[ExperimentRecord<T>],
    noise_ratio: T,
    max_points: usize,
) -> Result<HyperFit<T>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter fit needs records".into()));
    }
    let stride = records.len().div_ceil(max_points.max(2));
    let sub: Vec<&ExperimentRecord<T>> = records.iter().step_by(stride).collect();
    let inputs: Vec<Vec<T>> = sub.iter().map(|r| r.z.clone()).collect();
    let nf = T::from_usize_lossy(sub.len());
    let mean = sub.iter().map(|r| r.y).sum::<T>() / nf;
    let resid: Vec<T> = sub.iter().map(|r| r.y - mean).collect();
    let var = resid.iter().map(|&e| e * e).sum::<T>() / nf;
    let med = median_pairwise_distance(&inputs);

    let fallback = || {
        let floor = T::lit(1e-12) * mean.abs().max(T::one()).powi(2);
        let signal_var = var.max(floor);
        HyperFit {
            params: KernelParams { signal_var, lengthscale: med, noise_var: noise_ratio * signal_var },
            prior_mean: mean,
            fallback: true,
        }
    };
    let scale = mean.abs().max(T::one());
    if sub.len() < 3 || !(var > T::lit(1e-24) * scale * scale) {
        return Ok(fallback());
    }

    // coarse grid over log-lengthscale, then golden-section refinement
    let lo = (med * T::lit(0.01)).ln();
    let hi = (med * T::lit(20.0)).ln();
    let grid = 16;
    let at = |i: usize| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(grid - 1);
    let eval = |logl: T| profiled_loglik(&inputs, &resid, logl.exp(), noise_ratio);
    let mut best: Option<(usize, T)> = None;
    for i in 0..grid {
        if let Some((ll, _)) = eval(at(i)) {
            if best.is_none_or(|(_, b)| ll > b) {
                best = Some((i, ll));
            }
        }
    }
    let Some((bi, _)) = best else {
        return Ok(fallback());
    };
    let (mut a, mut b) = (at(bi.saturating_sub(1)), at((bi + 1).min(grid - 1)));
    let g = T::lit((5.0f64.sqrt() - 1.0) / 2.0);
    let neg = |x: T| eval(x).map_or(T::infinity(), |(ll, _)| -ll);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (neg(c), neg(d));
    for _ in 0..24 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = neg(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = neg(d);
        }
    }
    let logl = if fc < fd { c } else { d };
    let candidates = [logl, at(bi)];
    let mut chosen: Option<(T, T, T)> = None;
    for x in candidates {
        if let Some((ll, s2)) = eval(x) {
            if chosen.is_none_or(|(_, _, b)| ll > b) {
                chosen = Some((x, s2, ll));
            }
        }
    }
    let Some((logl, s2, _)) = chosen else {
        return Ok(fallback());
    };
    Ok(HyperFit {
        params: KernelParams { signal_var: s2, lengthscale: logl.exp(), noise_var: noise_ratio * s2 },
        prior_mean: mean,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rec(z: Vec<f64>, y: f64) -> ExperimentRecord<f64> {
        ExperimentRecord { z, y }
    }

    fn random_records(n: usize, d: usize, seed: u64) -> Vec<ExperimentRecord<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let y = z.iter().map(|v| v.sin()).sum::<f64>() + 0.3 * z[0] * z[0];
                rec(z, y)
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting; independent of the
    /// Cholesky path.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn single_record_interpolates() {
        let p = KernelParams::new(1.0, 1.0, 0.0).unwrap();
        let gp = GpModel::fit(&[rec(vec![0.3, -0.2], 5.0)], p, 0.0).unwrap();
        let (m, s) = gp.posterior(&[0.3, -0.2]);
        assert!((m - 5.0).abs() < 1e-8);
        assert!(s * s < 1e-8);
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let p = KernelParams::new(2.0, 0.5, 0.0).unwrap();
        let gp = GpModel::fit(&random_records(10, 2, 1), p, 1.5).unwrap();
        let (m, s) = gp.posterior(&[100.0, 100.0]);
        assert!((m - 1.5).abs() < 1e-3);
        assert!((s - 2.0f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn interpolates_twenty_points_in_four_dims() {
        let recs = random_records(20, 4, 7);
        let p = KernelParams::new(1.3, 1.7, 0.0).unwrap();
        let gp = GpModel::fit(&recs, p, 0.2).unwrap();
        for r in &recs {
            let (m, s) = gp.posterior(&r.z);
            assert!((m - r.y).abs() < 1e-6, "{m} vs {}", r.y);
            assert!(s * s <= 1e-6);
        }
    }

    #[test]
    fn matches_dense_solve_oracle() {
        let recs = random_records(5, 3, 3);
        let p = KernelParams::new(0.8, 1.1, 0.0).unwrap();
        let gp = GpModel::fit(&recs, p, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let kmat: Vec<Vec<f64>> = recs.iter().map(|a| recs.iter().map(|b| p.cov(&a.z, &b.z)).collect()).collect();
            let k: Vec<f64> = recs.iter().map(|a| p.cov(&a.z, &z)).collect();
            let resid: Vec<f64> = recs.iter().map(|r| r.y - 0.1).collect();
            let alpha = dense_solve(kmat.clone(), resid);
            let w = dense_solve(kmat, k.clone());
            let mean = 0.1 + k.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
            let var = 0.8 - k.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let (m, s) = gp.posterior(&z);
            assert!((m - mean).abs() < 1e-8);
            assert!((s * s - var.max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let recs = random_records(15, 2, 5);
        let p = KernelParams::new(1.0, 0.9, 0.0).unwrap();
        let gp = GpModel::fit(&recs, p, 0.0).unwrap();
        let l = gp.cholesky().lower();
        let llt = l.matmul(&l.transpose()).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                let mut k = p.cov(&recs[i].z, &recs[j].z);
                if i == j {
                    k += gp.diag_extra();
                }
                assert!((llt.get(i, j) - k).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn push_matches_full_fit() {
        let recs = random_records(12, 3, 11);
        let p = KernelParams::new(1.0, 1.2, 0.0).unwrap();
        let mut inc = GpModel::fit(&recs[..6], p, 0.0).unwrap();
        for r in &recs[6..] {
            inc.push(r.z.clone(), r.y).unwrap();
        }
        let full = GpModel::fit(&recs, p, 0.0).unwrap();
        let probes = random_records(10, 3, 12);
        for q in &probes {
            let (a, sa) = inc.posterior(&q.z);
            let (b, sb) = full.posterior(&q.z);
            assert!((a - b).abs() < 1e-9 && (sa - sb).abs() < 1e-7);
        }
    }

    #[test]
    fn batched_posterior_matches_single() {
        let recs = random_records(25, 2, 2);
        let p = KernelParams::new(1.4, 0.6, 0.0).unwrap();
        let gp = GpModel::fit(&recs, p, 0.0).unwrap();
        let probes: Vec<Vec<f64>> = random_records(40, 2, 8).into_iter().map(|r| r.z).collect();
        let batch = gp.posterior_many(&probes);
        let means = gp.mean_many(&probes);
        for ((z, (m, s)), mm) in probes.iter().zip(batch).zip(means) {
            let (m1, s1) = gp.posterior(z);
            assert!((m - m1).abs() < 1e-10 && (s - s1).abs() < 1e-8 && (mm - m1).abs() < 1e-10);
        }
    }

    #[test]
    fn local_bound_dominates_posterior_sd() {
        let recs = random_records(80, 3, 31);
        let p = KernelParams::new(1.0, 1.5, 0.0).unwrap();
        let gp = GpModel::fit(&recs, p, 0.0).unwrap();
        for q in random_records(200, 3, 32) {
            let (_, s) = gp.posterior(&q.z);
            for k in [1, 4, 12, 80] {
                assert!(gp.local_sd_bound(&q.z, k) >= s - 1e-7, "k={k}");
            }
            assert!((gp.local_sd_bound(&q.z, 80) - s).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_targets_use_median_heuristic() {
        let mut recs = random_records(10, 2, 4);
        for r in &mut recs {
            r.y = 3.0;
        }
        let fit = fit_hyperparameters(&recs, 0.0, 300).unwrap();
        assert!(fit.fallback);
        let inputs: Vec<Vec<f64>> = recs.iter().map(|r| r.z.clone()).collect();
        assert_eq!(fit.params.lengthscale, median_pairwise_distance(&inputs));
        let gp = GpModel::fit(&recs, fit.params, fit.prior_mean).unwrap();
        assert!((gp.posterior(&[0.0, 0.0]).0 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn likelihood_fit_recovers_sensible_lengthscale() {
        let recs = random_records(60, 2, 21);
        let fit = fit_hyperparameters(&recs, 0.0, 300).unwrap();
        assert!(!fit.fallback);
        assert!(fit.params.lengthscale > 0.3 && fit.params.lengthscale < 30.0, "{:?}", fit.params);
        // the fitted model should predict held-out points of a smooth function
        let gp = GpModel::fit(&recs, fit.params, fit.prior_mean).unwrap();
        let probe = rec(vec![0.5, -0.5], 0.5f64.sin() + (-0.5f64).sin() + 0.3 * 0.25);
        assert!((gp.posterior(&probe.z).0 - probe.y).abs() < 0.1);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let p = KernelParams::new(1.0, 1.0, 0.0).unwrap();
        assert!(GpModel::<f64>::fit(&[], p, 0.0).is_err());
        assert!(GpModel::fit(&[rec(vec![0.0], f64::NAN)], p, 0.0).is_err());
    }

    #[test]
    fn exact_duplicates_are_absorbed_by_jitter() {
        let p = KernelParams::new(1.0, 1.0, 0.0).unwrap();
        let recs = [rec(vec![0.0], 1.0), rec(vec![0.0], 1.0)];
        assert!(GpModel::fit(&recs, p, 0.0).is_ok());
    }
}
