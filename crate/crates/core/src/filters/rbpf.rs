//! Rao-Blackwellized SIR particle filter on the jump Markov state-space
//! reading of a model. Each particle carries a regime and the Kalman
//! posterior of its regime history; regimes are proposed from the prior
//! chain and particles are resampled after every step.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::jump::MixtureEstimate;
use super::kalman::{kalman_step_with_likelihood, kalman_update_init};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg;
use crate::model::ConditionalPmcModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub regime: usize,
    pub posterior: Gaussian,
}

/// Equally weighted particles after resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub step: usize,
}

fn sampler(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidChain(e.to_string()))
}

fn weighted_estimate(particles: &[Particle], weights: &[f64], k: usize) -> MixtureEstimate {
    let mut mode_probs = vec![0.0; k];
    for (p, w) in particles.iter().zip(weights) {
        mode_probs[p.regime] += w;
    }
    let seconds: Vec<DMatrix<f64>> = particles.iter().map(|p| p.posterior.second_moment()).collect();
    MixtureEstimate::from_components(
        weights
            .iter()
            .zip(particles)
            .zip(&seconds)
            .map(|((&w, p), s)| (w, p.posterior.mean(), s)),
        mode_probs,
    )
}

fn resample<R: Rng + ?Sized>(weights: &[f64], scheme: Resampling, rng: &mut R) -> Result<Vec<usize>> {
    let n = weights.len();
    Ok(match scheme {
        Resampling::Multinomial => {
            let dist = sampler(weights)?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        Resampling::Systematic => {
            let step = 1.0 / n as f64;
            let mut u = rng.random::<f64>() * step;
            let mut idx = Vec::with_capacity(n);
            let mut cum = weights[0];
            let mut i = 0;
            for _ in 0..n {
                while u > cum && i + 1 < n {
                    i += 1;
                    cum += weights[i];
                }
                idx.push(i);
                u += step;
            }
            idx
        }
    })
}

/// Normalizes log-weights into linear weights.
fn to_weights(log_w: &[f64], step: usize) -> Result<Vec<f64>> {
    let total = linalg::logsumexp(log_w);
    if !total.is_finite() {
        return Err(Error::DegenerateLikelihood { step });
    }
    Ok(log_w.iter().map(|w| (w - total).exp()).collect())
}

fn finish<R: Rng + ?Sized>(
    particles: Vec<Particle>,
    log_w: &[f64],
    step: usize,
    k: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Result<(ParticleSet, MixtureEstimate)> {
    let weights = to_weights(log_w, step)?;
    let est = weighted_estimate(&particles, &weights, k);
    let idx = resample(&weights, scheme, rng)?;
    let particles = idx.into_iter().map(|i| particles[i].clone()).collect();
    Ok((ParticleSet { particles, step }, est))
}

/// Draws `r_0` from the initial law and conditions on `y_0`.
pub fn rbpf_init<R: Rng + ?Sized>(
    model: &ConditionalPmcModel,
    y0: &DVector<f64>,
    n: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Result<(ParticleSet, MixtureEstimate)> {
    if n == 0 {
        return Err(Error::InvalidConfig("at least one particle is required".into()));
    }
    let k = model.k();
    let init = (0..k)
        .map(|r| kalman_update_init(model.regime(r), y0))
        .collect::<Result<Vec<_>>>()?;
    let dist = sampler(model.chain().initial())?;
    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for _ in 0..n {
        let r = dist.sample(rng);
        particles.push(Particle {
            regime: r,
            posterior: init[r].0.clone(),
        });
        log_w.push(init[r].1);
    }
    finish(particles, &log_w, 0, k, scheme, rng).map_err(|e| match e {
        Error::DegenerateLikelihood { .. } => Error::DegenerateInitialization,
        e => e,
    })
}

/// One SIR step: propose `r_k ~ p(r_k | r_{k-1})`, run each particle's
/// Kalman step, weight by the predictive likelihood, estimate, resample.
pub fn rbpf_sir<R: Rng + ?Sized>(
    set: &ParticleSet,
    y: &DVector<f64>,
    model: &ConditionalPmcModel,
    scheme: Resampling,
    rng: &mut R,
) -> Result<(ParticleSet, MixtureEstimate)> {
    let k = model.k();
    let trans = model.chain().trans();
    let rows = (0..k)
        .map(|i| sampler(trans.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let n = set.particles.len();
    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for p in &set.particles {
        let r = rows[p.regime].sample(rng);
        let (posterior, ll) = kalman_step_with_likelihood(&p.posterior, y, model.regime(r))?;
        particles.push(Particle { regime: r, posterior });
        log_w.push(ll);
    }
    finish(particles, &log_w, set.step + 1, k, scheme, rng)
}

/// Runs over `y_{0:T}` with `n` particles.
pub fn run_rbpf<R: Rng + ?Sized>(
    model: &ConditionalPmcModel,
    ys: &[DVector<f64>],
    n: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Result<Vec<MixtureEstimate>> {
    let Some((y0, rest)) = ys.split_first() else {
        return Ok(Vec::new());
    };
    let (mut set, est) = rbpf_init(model, y0, n, scheme, rng)?;
    let mut out = Vec::with_capacity(ys.len());
    out.push(est);
    for y in rest {
        let (next, est) = rbpf_sir(&set, y, model, scheme, rng)?;
        set = next;
        out.push(est);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kalman::kalman_step;
    use crate::model::scenarios;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn single_regime_is_kalman() {
        let model = scenarios::scalar_hmc(1.0).unwrap();
        let ys: Vec<_> = [0.5, 1.5, -0.3, 2.0].iter().map(|&y| v(y)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = run_rbpf(&model, &ys, 50, Resampling::Multinomial, &mut rng).unwrap();
        let (mut post, _) = kalman_update_init(model.regime(0), &ys[0]).unwrap();
        for (k, y) in ys.iter().enumerate() {
            if k > 0 {
                post = kalman_step(&post, y, model.regime(0)).unwrap();
            }
            assert!((est[k].mean[0] - post.mean()[0]).abs() <= 1e-13 * post.mean()[0].abs().max(1.0));
            assert!((est[k].cov[(0, 0)] - post.cov()[(0, 0)]).abs() <= 1e-13);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let model = scenarios::scalar_jump_jmss().unwrap();
        let ys: Vec<_> = (0..15).map(|k| v((k as f64).cos() * 5.0)).collect();
        let run = |scheme| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            run_rbpf(&model, &ys, 100, scheme, &mut rng).unwrap()
        };
        assert_eq!(run(Resampling::Multinomial), run(Resampling::Multinomial));
        assert_eq!(run(Resampling::Systematic), run(Resampling::Systematic));
    }

    #[test]
    fn systematic_resampling_keeps_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let idx = resample(&[0.5, 0.25, 0.25, 0.0], Resampling::Systematic, &mut rng).unwrap();
        let mut counts = [0; 4];
        for i in idx {
            counts[i] += 1;
        }
        assert_eq!(counts, [2, 1, 1, 0]);
    }

    #[test]
    fn zero_particles_is_a_config_error() {
        let model = scenarios::scalar_hmc(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            rbpf_init(&model, &v(0.0), 0, Resampling::Multinomial, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }
}
