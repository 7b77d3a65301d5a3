//! Sobol low-discrepancy points, Gray-code ordering, Joe-Kuo direction
//! numbers for up to eight dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;
const BITS: usize = 32;

/// (degree s, coefficient a, initial m_1..m_s) for dimensions 2..=8.
const JOE_KUO: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

fn direction_numbers(dim: usize) -> Vec<[u32; BITS]> {
    let mut out = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1u32 << (BITS - 1 - k);
    }
    out.push(first);
    for &(s, a, m_init) in JOE_KUO.iter().take(dim.saturating_sub(1)) {
        let s = s as usize;
        let mut m = vec![0u32; BITS];
        m[..s].copy_from_slice(m_init);
        for k in s..BITS {
            let mut v = m[k - s] ^ (m[k - s] << s);
            for j in 1..s {
                if (a >> (s - 1 - j)) & 1 == 1 {
                    v ^= m[k - j] << j;
                }
            }
            m[k] = v;
        }
        let mut dirs = [0u32; BITS];
        for k in 0..BITS {
            dirs[k] = m[k] << (BITS - 1 - k);
        }
        out.push(dirs);
    }
    out
}

/// Sequential generator. The all-zero leading point is skipped, so the first
/// point of the unscrambled sequence is `(0.5, ..., 0.5)`.
#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
    state: Vec<u32>,
    shift: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!("sobol dimension {dim} not in 1..={MAX_DIM}")));
        }
        Ok(Self { dirs: direction_numbers(dim), state: vec![0; dim], shift: vec![0; dim], index: 0 })
    }

    /// Same sequence XOR-ed with a seeded random digital shift.
    pub fn scrambled(dim: usize, seed: u64) -> Result<Self> {
        let mut s = Self::new(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.shift = (0..dim).map(|_| rng.random()).collect();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_point(&mut self) -> Vec<f64> {
        // gray-code step: flip the direction at the lowest zero bit of index
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < BITS, "sobol sequence exhausted");
        for (x, d) in self.state.iter_mut().zip(&self.dirs) {
            *x ^= d[c];
        }
        self.index += 1;
        self.state
            .iter()
            .zip(&self.shift)
            .map(|(&x, &s)| (x ^ s) as f64 / (1u64 << BITS) as f64)
            .collect()
    }
}

impl Iterator for Sobol {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        Some(self.next_point())
    }
}

/// `n` Sobol points mapped affinely into the box. `seed = None` gives the
/// plain sequence.
pub fn sobol_init(n: usize, lower: &[f64], upper: &[f64], seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() {
        return Err(Error::Shape("bound lengths differ".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument("lower bound above upper bound".into()));
    }
    let d = lower.len();
    let gen = match seed {
        Some(s) => Sobol::scrambled(d, s)?,
        None => Sobol::new(d)?,
    };
    Ok(gen
        .take(n)
        .map(|u| u.iter().enumerate().map(|(k, &v)| lower[k] + v * (upper[k] - lower[k])).collect())
        .collect())
}
