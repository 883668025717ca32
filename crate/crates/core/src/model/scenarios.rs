//! Built-in models for the scalar and tracking experiments.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{build_conditional_pmc, BuildPolicy, ConditionalPmcModel, F2Policy, H2Policy, JumpChain, RegimeParams};
use crate::error::Result;

/// Initial law used by every scalar scenario.
pub const SCALAR_M0: f64 = 0.0;
pub const SCALAR_P0: f64 = 1.0;

pub const SCALAR_JUMP_A: [f64; 3] = [1.0, -0.9, 0.9];
pub const SCALAR_JUMP_Q: [f64; 3] = [3.0, 10.0, 10.0];

/// Sampling period of the tracking scenarios.
pub const TRACKING_DT: f64 = 2.0;
pub const TRACKING_OMEGA: [f64; 3] = [0.0, 6.0 * PI / 180.0, -6.0 * PI / 180.0];
pub const TRACKING_SIGMA: [f64; 3] = [7.0, 10.0, 10.0];

/// Probability of staying in the same regime for the three-regime scenarios.
pub const STAY_PROB: f64 = 0.8;

pub fn three_regime_chain() -> JumpChain {
    JumpChain::symmetric(3, STAY_PROB).expect("valid chain")
}

/// `a = b = R = 1` with process noise `q`.
pub fn scalar_regime(q: f64) -> Result<RegimeParams> {
    RegimeParams::scalar(1.0, 1.0, q, 1.0, SCALAR_M0, SCALAR_P0)
}

/// Single-regime hidden Markov model used as reference in the sweep.
pub fn scalar_hmc(q: f64) -> Result<ConditionalPmcModel> {
    build_conditional_pmc(JumpChain::single(), vec![scalar_regime(q)?], BuildPolicy::jmss())
}

/// Exactly filterable single-regime model with the KLD-optimal `F2`.
pub fn scalar_optimal(q: f64) -> Result<ConditionalPmcModel> {
    build_conditional_pmc(JumpChain::single(), vec![scalar_regime(q)?], BuildPolicy::exact_kld())
}

pub fn scalar_jump_regimes() -> Result<Vec<RegimeParams>> {
    SCALAR_JUMP_A
        .iter()
        .zip(SCALAR_JUMP_Q)
        .map(|(&a, q)| RegimeParams::scalar(a, 1.0, q, 1.0, SCALAR_M0, SCALAR_P0))
        .collect()
}

/// Data-generating jump Markov model of the scalar jump scenario.
pub fn scalar_jump_jmss() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(three_regime_chain(), scalar_jump_regimes()?, BuildPolicy::jmss())
}

/// Exactly filterable counterpart of [`scalar_jump_jmss`].
pub fn scalar_jump_filter_model() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(three_regime_chain(), scalar_jump_regimes()?, BuildPolicy::exact_kld())
}

/// Coordinated-turn transition for state `[px, vx, py, vy]`.
pub fn coordinated_turn(omega: f64, dt: f64) -> DMatrix<f64> {
    let (s, c) = (omega * dt).sin_cos();
    // sin(wT)/w and (1 - cos(wT))/w, with their limits at w = 0
    let (sw, cw) = if omega.abs() < 1e-12 {
        (dt, 0.0)
    } else {
        (s / omega, (1.0 - c) / omega)
    };
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, sw, 0.0, -cw, //
            0.0, c, 0.0, -s, //
            0.0, cw, 1.0, sw, //
            0.0, s, 0.0, c,
        ],
    )
}

pub fn tracking_process_noise(sigma: f64, dt: f64) -> DMatrix<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            a, b, 0.0, 0.0, //
            b, c, 0.0, 0.0, //
            0.0, 0.0, a, b, //
            0.0, 0.0, b, c,
        ],
    ) * (sigma * sigma)
}

/// Diffuse prior on position and velocity.
pub fn tracking_prior() -> (DVector<f64>, DMatrix<f64>) {
    (
        DVector::zeros(4),
        DMatrix::from_diagonal(&DVector::from_vec(vec![100.0 * 100.0, 10.0 * 10.0, 100.0 * 100.0, 10.0 * 10.0])),
    )
}

/// Straight, left turn and right turn.
pub fn tracking_regimes() -> Result<Vec<RegimeParams>> {
    let (m0, p0) = tracking_prior();
    TRACKING_OMEGA
        .iter()
        .zip(TRACKING_SIGMA)
        .map(|(&w, sigma)| {
            RegimeParams::new(
                coordinated_turn(w, TRACKING_DT),
                DMatrix::identity(4, 4),
                tracking_process_noise(sigma, TRACKING_DT),
                DMatrix::identity(4, 4),
                m0.clone(),
                p0.clone(),
            )
        })
        .collect()
}

pub fn tracking_jmss() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(three_regime_chain(), tracking_regimes()?, BuildPolicy::jmss())
}

/// Exactly filterable model used on jump Markov tracking data.
pub fn tracking_filter_model() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(three_regime_chain(), tracking_regimes()?, BuildPolicy::exact_kld())
}

/// Pairwise data generator with `F2 = 0.7 F` and `H2` at 0.9 times the
/// constraint solution (`0.9 F` here). The same scaling applied to `H = I`
/// gives an indefinite noise covariance for these regimes.
pub fn tracking_pmc_generator() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(
        three_regime_chain(),
        tracking_regimes()?,
        BuildPolicy {
            f2: F2Policy::ScaledF(0.7),
            h2: H2Policy::ScaledConstraint(0.9),
        },
    )
}

/// Filter for pairwise tracking data: `F2 = 0.8 F` and the solved `H2`.
pub fn tracking_pmc_filter_model() -> Result<ConditionalPmcModel> {
    build_conditional_pmc(
        three_regime_chain(),
        tracking_regimes()?,
        BuildPolicy {
            f2: F2Policy::ScaledF(0.8),
            h2: H2Policy::SolveConstraint,
        },
    )
}
