//! Exact filtering for conditional linear-Gaussian pairwise Markov chains
//! with Markov regime jumps, plus the classical baselines (IMM, particle
//! filter), simulators, reference oracles and experiment drivers.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod gaussian;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod simulate;

pub use error::{Error, Result};
pub use experiment::{run_experiment, EstimatorKind, ExperimentResult, RunMatrix, ScenarioConfig, ScenarioName};
pub use filters::{JumpFilter, JumpFilterState, MixtureEstimate};
pub use gaussian::Gaussian;
pub use model::{
    build_conditional_pmc, validate_model, BuildPolicy, ConditionalPmcModel, JumpChain, PmcBlocks, RegimeParams,
};
pub use simulate::{simulate, Trajectory};
