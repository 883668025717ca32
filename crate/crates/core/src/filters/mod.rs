//! Filtering algorithms.

pub mod imm;
pub mod jump;
pub mod kalman;
pub mod rbpf;

pub use imm::{imm_init, imm_step, run_imm, ImmState};
pub use jump::{
    estimate, jump_filter_init, jump_filter_step, precompute_step_matrices, JumpFilter, JumpFilterState,
    MixtureEstimate, PairStep, StepMatrices,
};
pub use kalman::{
    kalman_predict, kalman_step, kalman_step_with_likelihood, kalman_update, kalman_update_init, pmc_kalman_step,
    pmc_kalman_step_with_likelihood,
};
pub use rbpf::{rbpf_init, rbpf_sir, run_rbpf, Particle, ParticleSet, Resampling};
