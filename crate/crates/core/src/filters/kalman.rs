//! Single-regime Kalman filters for hidden Markov and pairwise Markov chains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{affine_marginal, condition, Gaussian, JointGaussianBlocks};
use crate::linalg::SpdFactor;
use crate::model::{PmcBlocks, RegimeParams};

fn check_obs(y: &DVector<f64>, p: usize, context: &'static str) -> Result<()> {
    if y.len() != p {
        return Err(Error::DimensionMismatch {
            context,
            expected: p,
            found: y.len(),
        });
    }
    Ok(())
}

/// `N(F m, F P F^T + Q)`.
pub fn kalman_predict(prior: &Gaussian, reg: &RegimeParams) -> Result<Gaussian> {
    if prior.dim() != reg.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "kalman prior",
            expected: reg.state_dim(),
            found: prior.dim(),
        });
    }
    let mean = &reg.f * prior.mean();
    let cov = &reg.f * prior.cov() * reg.f.transpose() + &reg.q;
    Ok(Gaussian::from_parts(mean, cov))
}

/// Measurement update of `predicted` with `y ~ N(H x, R)`; also returns
/// `log N(y; H m, H P H^T + R)`.
pub fn kalman_update(
    predicted: &Gaussian,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(Gaussian, f64)> {
    check_obs(y, h.nrows(), "kalman observation")?;
    let hp = h * predicted.cov();
    let s = &hp * h.transpose() + r;
    let factor = SpdFactor::new(&s)?;
    let innovation = y - h * predicted.mean();
    let loglik = factor.log_density_centered(&innovation);
    // K = P H^T S^{-1} = (S^{-1} H P)^T
    let gain = factor.solve(&hp).transpose();
    let mean = predicted.mean() + &gain * innovation;
    let cov = predicted.cov() - &gain * hp;
    Ok((Gaussian::from_parts(mean, cov), loglik))
}

/// One predict/update cycle of the Kalman filter for `reg`.
pub fn kalman_step(prior: &Gaussian, y: &DVector<f64>, reg: &RegimeParams) -> Result<Gaussian> {
    kalman_step_with_likelihood(prior, y, reg).map(|(g, _)| g)
}

/// [`kalman_step`] plus the predictive log-likelihood of `y`.
pub fn kalman_step_with_likelihood(
    prior: &Gaussian,
    y: &DVector<f64>,
    reg: &RegimeParams,
) -> Result<(Gaussian, f64)> {
    let predicted = kalman_predict(prior, reg)?;
    kalman_update(&predicted, y, &reg.h, &reg.r)
}

/// Posterior on `x_0` given `y_0` under the initial law of `reg`, with
/// `log N(y_0; H m0, R + H P0 H^T)`.
pub fn kalman_update_init(reg: &RegimeParams, y0: &DVector<f64>) -> Result<(Gaussian, f64)> {
    kalman_update(&reg.prior(), y0, &reg.h, &reg.r)
}

/// Exact filtering step of a pairwise Markov chain with fixed blocks: the
/// joint of `(x_k, y_k)` given `y_{k-1}` is obtained by pushing the posterior
/// on `x_{k-1}` through the transition, then conditioned on `y_k`.
pub fn pmc_kalman_step(
    prior: &Gaussian,
    y_prev: &DVector<f64>,
    y: &DVector<f64>,
    blocks: &PmcBlocks,
) -> Result<Gaussian> {
    pmc_kalman_step_with_likelihood(prior, y_prev, y, blocks).map(|(g, _)| g)
}

/// [`pmc_kalman_step`] plus `log p(y_k | y_{0:k-1})`.
pub fn pmc_kalman_step_with_likelihood(
    prior: &Gaussian,
    y_prev: &DVector<f64>,
    y: &DVector<f64>,
    blocks: &PmcBlocks,
) -> Result<(Gaussian, f64)> {
    let m = blocks.state_dim();
    let p = blocks.obs_dim();
    check_obs(y_prev, p, "pmc previous observation")?;
    check_obs(y, p, "pmc observation")?;
    let offset = blocks.observation_columns() * y_prev;
    let joint = affine_marginal(&blocks.state_columns(), &offset, &blocks.noise_cov(), prior)?;
    let joint = JointGaussianBlocks::split(&joint, m)?;
    let loglik = SpdFactor::new(&joint.cov_eta)?.log_density_centered(&(y - &joint.mean_eta));
    Ok((condition(&joint, y)?, loglik))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::{constrained_pmc, hmc_as_pmc};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn scalar_step_example() {
        let reg = RegimeParams::scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let post = kalman_step(&Gaussian::scalar(0.0, 1.0).unwrap(), &v(&[2.0]), &reg).unwrap();
        assert!((post.mean()[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((post.cov()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn blind_sensor_returns_prediction() {
        let reg = RegimeParams::new(
            dmatrix![1.0, 1.0; 0.0, 1.0],
            DMatrix::zeros(1, 2),
            DMatrix::identity(2, 2),
            dmatrix![1.0],
            DVector::zeros(2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let prior = Gaussian::new(v(&[1.0, 2.0]), dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let post = kalman_step(&prior, &v(&[5.0]), &reg).unwrap();
        let pred = kalman_predict(&prior, &reg).unwrap();
        assert_eq!(post, pred);
    }

    fn random_regime(rng: &mut ChaCha8Rng, m: usize, p: usize) -> RegimeParams {
        let mut n = || rng.sample::<f64, _>(StandardNormal);
        let f = DMatrix::from_fn(m, m, |_, _| 0.4 * n());
        let h = DMatrix::from_fn(p, m, |_, _| n());
        let a = DMatrix::from_fn(m, m, |_, _| n());
        let q = &a * a.transpose() + DMatrix::identity(m, m) * 0.1;
        let b = DMatrix::from_fn(p, p, |_, _| n());
        let r = &b * b.transpose() + DMatrix::identity(p, p) * 0.1;
        RegimeParams::new(f, h, q, r, DVector::zeros(m), DMatrix::identity(m, m)).unwrap()
    }

    #[test]
    fn pmc_step_on_hmc_blocks_matches_kalman() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let reg = random_regime(&mut rng, 4, 4);
            let prior = Gaussian::new(
                DVector::from_fn(4, |_, _| rng.sample(StandardNormal)),
                DMatrix::identity(4, 4) * 2.0,
            )
            .unwrap();
            let y = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
            let y_prev = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
            let (a, la) = kalman_step_with_likelihood(&prior, &y, &reg).unwrap();
            let (b, lb) = pmc_kalman_step_with_likelihood(&prior, &y_prev, &y, &hmc_as_pmc(&reg)).unwrap();
            let scale = linalg::max_abs(a.cov()).max(1.0);
            assert!((a.mean() - b.mean()).amax() <= 1e-10 * scale);
            assert!(linalg::rel_diff(b.cov(), a.cov()) <= 1e-10);
            assert!((la - lb).abs() <= 1e-10 * la.abs().max(1.0));
        }
    }

    #[test]
    fn diffuse_prior_reduces_to_single_step_conditioning() {
        let reg = RegimeParams::scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let blocks = constrained_pmc(&reg, &reg, &dmatrix![0.5], &dmatrix![1.0]).unwrap();
        let prior = Gaussian::scalar(0.0, 1e6).unwrap();
        let post = pmc_kalman_step(&prior, &v(&[1.0]), &v(&[3.0]), &blocks).unwrap();
        // y_k does not depend on x_{k-1} here, so only F1 carries the diffuse spread.
        let joint_xx = 0.75 + 0.25 * 1e6;
        let joint_xy = 0.5;
        let joint_yy = 1.0;
        let mean = 0.5 * 1.0 + joint_xy / joint_yy * (3.0 - 1.0);
        let var = joint_xx - joint_xy * joint_xy / joint_yy;
        assert!((post.mean()[0] - mean).abs() < 1e-9);
        assert!((post.cov()[(0, 0)] - var).abs() < 1e-6);
    }

    #[test]
    fn likelihood_of_init_matches_predictive() {
        let reg = RegimeParams::scalar(0.3, 2.0, 1.0, 0.5, 1.0, 3.0).unwrap();
        let (_, ll) = kalman_update_init(&reg, &v(&[0.7])).unwrap();
        let var = 0.5 + 4.0 * 3.0;
        let expect = -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (0.7 - 2.0f64).powi(2) / var);
        assert!((ll - expect).abs() < 1e-14);
    }
}
