//! Random model generators and comparison helpers shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pmcjump::model::{F2Policy, H2Policy};
use pmcjump::{build_conditional_pmc, BuildPolicy, ConditionalPmcModel, JumpChain, RegimeParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = gauss_matrix(rng, n, n, 1.0);
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

pub fn random_chain(rng: &mut ChaCha8Rng, k: usize) -> JumpChain {
    let row = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let initial = row(rng);
    let mut trans = DMatrix::zeros(k, k);
    for i in 0..k {
        trans.row_mut(i).copy_from(&DVector::from_vec(row(rng)).transpose());
    }
    JumpChain::new(initial, trans).unwrap()
}

/// Well-conditioned `H` near the identity and `Q` dominating `R`, so most
/// draws give admissible pairwise blocks.
pub fn random_regime(rng: &mut ChaCha8Rng, m: usize) -> RegimeParams {
    let h = gauss_matrix(rng, m, m, 0.3) + DMatrix::identity(m, m);
    let b = gauss_matrix(rng, m, m, 0.3);
    RegimeParams::new(
        gauss_matrix(rng, m, m, 0.5),
        h,
        spd(rng, m, 1.0),
        &b * b.transpose() + DMatrix::identity(m, m) * 0.5,
        gauss_matrix(rng, m, 1, 1.0).column(0).into_owned(),
        spd(rng, m, 0.5),
    )
    .unwrap()
}

/// Exactly filterable `K`-regime model with square `H`. Even seeds use the
/// divergence-optimal `F2`, odd seeds a random small `F2`; draws whose noise
/// covariance is not positive definite are rejected.
pub fn random_exact_model(seed: u64, k: usize, m: usize) -> ConditionalPmcModel {
    let mut rng = rng(seed);
    loop {
        let chain = random_chain(&mut rng, k);
        let regimes: Vec<RegimeParams> = (0..k).map(|_| random_regime(&mut rng, m)).collect();
        let f2 = if seed % 2 == 0 {
            F2Policy::KldOptimal
        } else {
            F2Policy::Explicit(
                (0..k)
                    .map(|_| (0..k).map(|_| gauss_matrix(&mut rng, m, m, 0.1)).collect())
                    .collect(),
            )
        };
        let policy = BuildPolicy {
            f2,
            h2: H2Policy::SolveConstraint,
        };
        if let Ok(model) = build_conditional_pmc(chain, regimes, policy) {
            return model;
        }
    }
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_dev(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let scale = b.iter().fold(floor, |acc, x| acc.max(x.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
