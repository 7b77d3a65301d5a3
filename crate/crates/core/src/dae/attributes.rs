use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exemplars::projectile::time_step;
use crate::linalg::{lstsq, Mat};

/// Spectral bins whose magnitude (|X_k| / D) is at or below this are noise.
pub const DFT_NOISE_FLOOR: f64 = 1e-6;

/// Physics-informed scalar summaries of an experiment vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    /// Mean forward difference.
    Slope,
    /// Mean second central difference.
    Curvature,
    /// Sum of components.
    Amplitude,
    /// Index of the strongest non-constant DFT bin.
    Omega,
    /// Launch velocity of a sampled trajectory: |y'(0)| from the
    /// second-order forward difference on the trajectory time grid.
    U,
}

impl Attribute {
    pub const ALL: [Attribute; 5] =
        [Attribute::Slope, Attribute::Curvature, Attribute::Amplitude, Attribute::Omega, Attribute::U];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Slope => "slope",
            Attribute::Curvature => "curvature",
            Attribute::Amplitude => "amplitude",
            Attribute::Omega => "omega",
            Attribute::U => "u",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Unknown { kind: "attribute", name: s.to_string() })
    }
}

pub fn extract_attribute(x: &[f64], attr: Attribute) -> Result<f64> {
    let n = x.len();
    let need = match attr {
        Attribute::Slope => 2,
        Attribute::Curvature | Attribute::U => 3,
        Attribute::Amplitude | Attribute::Omega => 1,
    };
    if n < need {
        return Err(Error::InvalidArgument(format!("{attr} needs at least {need} samples, got {n}")));
    }
    Ok(match attr {
        Attribute::Slope => (x[n - 1] - x[0]) / (n - 1) as f64,
        Attribute::Curvature => x.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).sum::<f64>() / (n - 2) as f64,
        Attribute::Amplitude => x.iter().sum(),
        Attribute::Omega => dominant_frequency(x) as f64,
        Attribute::U => ((-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * time_step())).abs(),
    })
}

/// Bin in 1..=D/2 with the largest DFT magnitude above the noise floor, or 0.
pub fn dominant_frequency(x: &[f64]) -> usize {
    let n = x.len();
    let mut best = (0, DFT_NOISE_FLOOR);
    for k in 1..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, v) in x.iter().enumerate() {
            // Reduce k*j mod n first so the angle stays small and exact.
            let ang = std::f64::consts::TAU * ((k * j) % n) as f64 / n as f64;
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        let mag = re.hypot(im) / n as f64;
        if mag > best.1 {
            best = (k, mag);
        }
    }
    best.0
}

/// Rank with ties sharing their average (1-based) rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("spearman needs equal lengths >= 2, got {} and {}", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("spearman input contains NaN".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroRankVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sign with `sgn(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over ordered pairs i != j of (tanh(z_i - z_j) - sgn(a_i - a_j))^2,
/// summed over `(latent index, attribute column)` pairs.
pub fn dist_loss(z: &[Vec<f64>], attrs: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<f64> {
    let n = z.len();
    if n < 2 || attrs.len() != n {
        return Err(Error::InvalidArgument(format!("dist_loss needs a batch >= 2 with matching attributes ({n} vs {})", attrs.len())));
    }
    let mut total = 0.0;
    for &(l, a) in pairs {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = (z[i][l] - z[j][l]).tanh() - sgn(attrs[i][a] - attrs[j][a]);
                    s += d * d;
                }
            }
        }
        total += s / (n * (n - 1)) as f64;
    }
    Ok(total)
}

/// Savitzky-Golay smoothing with a least-squares polynomial of `order` over
/// `window` samples. The first and last half-windows are evaluated from the
/// polynomial fitted to the first and last full window.
pub fn savgol(x: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || order >= window {
        return Err(Error::InvalidArgument(format!("savgol window {window} must be odd and exceed order {order}")));
    }
    if x.len() < window {
        return Err(Error::InvalidArgument(format!("savgol window {window} longer than signal {}", x.len())));
    }
    let h = savgol_hat(window, order)?;
    let half = window / 2;
    let n = x.len();
    let apply = |row: &[f64], start: usize| -> f64 { row.iter().zip(&x[start..start + window]).map(|(c, v)| c * v).sum() };
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i < half {
            apply(h.row(i), 0)
        } else if i + half >= n {
            apply(h.row(window - (n - i)), n - window)
        } else {
            apply(h.row(half), i - half)
        };
    }
    Ok(out)
}

/// Hat matrix of the windowed polynomial fit: row k gives the fitted value at
/// window position k as a combination of the window samples.
fn savgol_hat(window: usize, order: usize) -> Result<Mat<f64>> {
    let half = (window / 2) as f64;
    let a = Mat::from_fn(window, order + 1, |i, j| ((i as f64 - half) / half).powi(j as i32));
    let mut h = Mat::zeros(window, window);
    for col in 0..window {
        let mut e = vec![0.0; window];
        e[col] = 1.0;
        let coef = lstsq(&a, &e)?;
        for k in 0..window {
            h.set(k, col, a.row(k).iter().zip(&coef).map(|(p, c)| p * c).sum());
        }
    }
    Ok(h)
}
