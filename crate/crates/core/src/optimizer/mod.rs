//! Gaussian-process active learning and a differential-evolution baseline.

mod acquisition;
mod al;
mod de;
mod gp;
mod kernel;
pub mod nelder_mead;
mod sobol;

use serde::{Deserialize, Serialize};

pub use acquisition::{acquire_ei, acquire_ucb, expected_improvement, log_expected_improvement, norm_cdf, norm_pdf, AcqKind};
pub use al::{al_loop, read_jsonl, write_jsonl, AlConfig, AlRecord, AlRun, SearchSpace};
pub use de::{de_optimize, latin_hypercube, DeConfig, DeRun};
pub use gp::{fit_hyperparameters, median_pairwise_distance, GpModel, HyperFit};
pub use kernel::{distance, matern52, matern52_corr, KernelParams};
pub use sobol::{sobol_init, Sobol};

/// A latent point and its measured objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord<T = f64> {
    pub z: Vec<T>,
    pub y: T,
}
