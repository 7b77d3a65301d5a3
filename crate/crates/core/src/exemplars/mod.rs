//! Ground-truth generators and objectives for the worked examples.

pub mod ising;
pub mod photonics;
pub mod projectile;

pub use ising::{
    critical_beta, ising_al_objective, magnetization_average, mean_equilibration_time, onsager_magnetization,
    spin_init, time_to_equilibrium, Equilibration, EquilibriumCriterion, IsingLattice,
};
pub use photonics::{
    directivity_box_max, directivity_surrogate, grating_argmax, grating_benchmark, pattern_sweep, pump_pattern, wrap,
    PumpPattern, DIRECTIVITY_COEFFS,
};
pub use projectile::{accel_objective, gen_trajectory, max_height, projectile_dataset, LaunchParams, Trajectory};
