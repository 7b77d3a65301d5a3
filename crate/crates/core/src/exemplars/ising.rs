use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the square lattice used throughout.
pub const SIDE: usize = 32;

/// `beta_c = asinh(1) / 2`.
pub fn critical_beta() -> f64 {
    1f64.asinh() / 2.0
}

/// Spontaneous magnetization of the infinite 2-D lattice (J = k = 1).
pub fn onsager_magnetization(beta: f64) -> f64 {
    let s = (2.0 * beta).sinh();
    if s > 1.0 { (1.0 - s.powi(-4)).powf(0.125) } else { 0.0 }
}

/// Periodic square lattice of +-1 spins with running energy and
/// magnetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsingLattice {
    side: usize,
    spins: Vec<i8>,
    energy: i64,
    spin_sum: i64,
}

impl IsingLattice {
    pub fn from_spins(side: usize, spins: Vec<i8>) -> Result<Self> {
        if side < 2 || spins.len() != side * side || spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("spins must be +-1 on a side x side grid".into()));
        }
        let mut l = Self { side, spins, energy: 0, spin_sum: 0 };
        l.energy = l.recompute_energy();
        l.spin_sum = l.spins.iter().map(|&s| s as i64).sum();
        Ok(l)
    }

    pub fn all_up(side: usize) -> Self {
        Self::from_spins(side, vec![1; side * side]).expect("valid lattice")
    }

    pub fn checkerboard(side: usize) -> Self {
        let spins = (0..side * side).map(|i| if (i / side + i % side) % 2 == 0 { 1 } else { -1 }).collect();
        Self::from_spins(side, spins).expect("valid lattice")
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Running energy `-sum_<ij> s_i s_j` over the 2N bonds.
    pub fn energy(&self) -> i64 {
        self.energy
    }

    pub fn magnetization(&self) -> f64 {
        self.spin_sum as f64 / self.spins.len() as f64
    }

    pub fn up_count(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }

    /// Energy from scratch, counting each right and down bond once.
    pub fn recompute_energy(&self) -> i64 {
        let n = self.side;
        let mut e = 0i64;
        for r in 0..n {
            for c in 0..n {
                let s = self.spins[r * n + c] as i64;
                e -= s * self.spins[r * n + (c + 1) % n] as i64;
                e -= s * self.spins[((r + 1) % n) * n + c] as i64;
            }
        }
        e
    }

    fn neighbour_sum(&self, i: usize) -> i64 {
        let n = self.side;
        let (r, c) = (i / n, i % n);
        let at = |r: usize, c: usize| self.spins[r * n + c] as i64;
        at((r + n - 1) % n, c) + at((r + 1) % n, c) + at(r, (c + n - 1) % n) + at(r, (c + 1) % n)
    }

    /// Energy change of flipping spin `i`: `2 s_i sum_nb s_j`.
    pub fn flip_delta(&self, i: usize) -> i64 {
        2 * self.spins[i] as i64 * self.neighbour_sum(i)
    }

    /// N single-spin Metropolis proposals at random sites.
    pub fn metropolis_sweep<R: Rng + ?Sized>(&mut self, beta: f64, rng: &mut R) {
        // only dE in {4, 8} can be rejected
        let accept = [(-4.0 * beta).exp(), (-8.0 * beta).exp()];
        let n = self.spins.len();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let de = self.flip_delta(i);
            if de <= 0 || rng.random::<f64>() < accept[(de / 4 - 1) as usize] {
                self.apply_flip(i, de);
            }
        }
    }

    /// One Metropolis decision for site `i` given a uniform draw `u`.
    pub fn attempt_flip(&mut self, i: usize, beta: f64, u: f64) -> bool {
        let de = self.flip_delta(i);
        let ok = de <= 0 || u < (-beta * de as f64).exp();
        if ok {
            self.apply_flip(i, de);
        }
        ok
    }

    fn apply_flip(&mut self, i: usize, de: i64) {
        self.spins[i] = -self.spins[i];
        self.energy += de;
        self.spin_sum += 2 * self.spins[i] as i64;
    }
}

/// Lattice with exactly `floor(N (1 + m_init) / 2)` up spins at random sites.
pub fn spin_init(side: usize, m_init: f64, seed: u64) -> Result<IsingLattice> {
    if !(-1.0..=1.0).contains(&m_init) {
        return Err(Error::InvalidArgument(format!("m_init {m_init} outside [-1, 1]")));
    }
    let n = side * side;
    let ups = ((n as f64 * (1.0 + m_init) / 2.0).floor() as usize).min(n);
    let mut spins: Vec<i8> = (0..n).map(|i| if i < ups { 1 } else { -1 }).collect();
    spins.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    IsingLattice::from_spins(side, spins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquilibriumCriterion {
    pub eps: f64,
    pub window: usize,
    pub cap: usize,
}

impl Default for EquilibriumCriterion {
    fn default() -> Self {
        Self { eps: 0.02, window: 50, cap: 50_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibration {
    /// Sweeps until equilibrium was confirmed (the cap on timeout).
    pub sweeps: usize,
    pub capped: bool,
}

/// Sweeps until the magnetization sits at the Onsager value: the first `t`
/// where `|m(t) - M_eq| < eps` and the mean of `m` over `[t, t + window)` is
/// also within `eps`; reported as `t + window`, the sweeps needed to confirm.
///
/// In the ordered phase `m = |M|`, since a finite lattice may settle in either
/// sign. In the disordered phase the signed `M` is used: `<|M|>` of a finite
/// lattice stays above zero there.
pub fn time_to_equilibrium(
    side: usize,
    m_init: f64,
    beta: f64,
    crit: &EquilibriumCriterion,
    seed: u64,
) -> Result<Equilibration> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    if crit.window == 0 || crit.cap < crit.window {
        return Err(Error::InvalidArgument("need 0 < window <= cap".into()));
    }
    let target = onsager_magnetization(beta);
    let mut lattice = spin_init(side, m_init, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ordered = target > 0.0;
    let observe = |l: &IsingLattice| if ordered { l.magnetization().abs() } else { l.magnetization() };
    let mut trace = vec![observe(&lattice)];
    // prefix[k] = sum of trace[..k]
    let mut prefix = vec![0.0, trace[0]];
    let near = |m: f64| (m - target).abs() < crit.eps;
    let mut t = 0usize;
    while t + crit.window <= crit.cap {
        while trace.len() < t + crit.window {
            lattice.metropolis_sweep(beta, &mut rng);
            let m = observe(&lattice);
            trace.push(m);
            prefix.push(prefix[prefix.len() - 1] + m);
        }
        if near(trace[t]) {
            let mean = (prefix[t + crit.window] - prefix[t]) / crit.window as f64;
            if near(mean) {
                return Ok(Equilibration { sweeps: t + crit.window, capped: false });
            }
        }
        t += 1;
    }
    Ok(Equilibration { sweeps: crit.cap, capped: true })
}

/// Mean equilibration time over `seeds`; the optimizer maximizes its
/// negative.
pub fn mean_equilibration_time(
    side: usize,
    m_init: f64,
    beta: f64,
    crit: &EquilibriumCriterion,
    seeds: &[u64],
) -> Result<f64> {
    let mut total = 0.0;
    for &s in seeds {
        total += time_to_equilibrium(side, m_init, beta, crit, s)?.sweeps as f64;
    }
    Ok(total / seeds.len().max(1) as f64)
}

/// Negated mean equilibration time over three seeds derived from `seed`.
pub fn ising_al_objective(m_init: f64, beta: f64, crit: &EquilibriumCriterion, seed: u64) -> Result<f64> {
    let seeds = [seed, seed.wrapping_add(1), seed.wrapping_add(2)];
    Ok(-mean_equilibration_time(SIDE, m_init, beta, crit, &seeds)?)
}

/// Long-run averages after burn-in: `(<M>, <|M|>)`.
pub fn magnetization_average(side: usize, beta: f64, burn_in: usize, sweeps: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lattice = if beta > critical_beta() { IsingLattice::all_up(side) } else {
        spin_init(side, 0.0, seed).expect("valid m_init")
    };
    for _ in 0..burn_in {
        lattice.metropolis_sweep(beta, &mut rng);
    }
    let (mut m, mut am) = (0.0, 0.0);
    for _ in 0..sweeps {
        lattice.metropolis_sweep(beta, &mut rng);
        let x = lattice.magnetization();
        m += x;
        am += x.abs();
    }
    (m / sweeps as f64, am / sweeps as f64)
}
