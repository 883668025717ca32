//! Seeded samplers for jump chains and trajectories.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::model::{ConditionalPmcModel, JumpChain};

/// Generator used for every random stream.
pub type SimRng = ChaCha8Rng;

/// Seed of Monte Carlo run `run` under base seed `base`.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base ^ run as u64
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One realization of `(r_{0:T}, x_{0:T}, y_{0:T})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// 0-based regime labels.
    pub regimes: Vec<usize>,
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    /// Seed the trajectory was drawn from.
    pub seed: u64,
}

impl Trajectory {
    /// Horizon `T` (the trajectory holds `T + 1` time steps).
    pub fn horizon(&self) -> usize {
        self.regimes.len().saturating_sub(1)
    }

    /// CSV with columns `k, r, x1..xm, y1..yp`; regimes are written 1-based.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let m = self.states.first().map_or(0, DVector::len);
        let p = self.observations.first().map_or(0, DVector::len);
        let mut header = vec!["k".to_string(), "r".to_string()];
        header.extend((1..=m).map(|i| format!("x{i}")));
        header.extend((1..=p).map(|i| format!("y{i}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.regimes.len() {
            let mut row = vec![k.to_string(), (self.regimes[k] + 1).to_string()];
            row.extend(self.states[k].iter().map(|&v| format_float(v)));
            row.extend(self.observations[k].iter().map(|&v| format_float(v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn categorical(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidChain(e.to_string()))
}

/// `r_0 ~ initial`, `r_k ~ trans[r_{k-1}]`, for `k = 0..=T`.
pub fn sample_jump_chain<R: Rng + ?Sized>(chain: &JumpChain, horizon: usize, rng: &mut R) -> Result<Vec<usize>> {
    let initial = categorical(chain.initial())?;
    let rows = (0..chain.k())
        .map(|i| categorical(&chain.trans().row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(horizon + 1);
    let mut r = initial.sample(rng);
    out.push(r);
    for _ in 0..horizon {
        r = rows[r].sample(rng);
        out.push(r);
    }
    Ok(out)
}

fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Ancestral sampler with Cholesky factors computed once per regime and pair.
#[derive(Debug, Clone)]
pub struct TrajectorySampler<'a> {
    model: &'a ConditionalPmcModel,
    init_mean: Vec<DVector<f64>>,
    init_lower: Vec<DMatrix<f64>>,
    transition: Vec<DMatrix<f64>>,
    noise_lower: Vec<DMatrix<f64>>,
}

impl<'a> TrajectorySampler<'a> {
    pub fn new(model: &'a ConditionalPmcModel) -> Result<Self> {
        let k = model.k();
        let mut init_mean = Vec::with_capacity(k);
        let mut init_lower = Vec::with_capacity(k);
        for reg in model.regimes() {
            let joint = reg.initial_joint();
            init_lower.push(SpdFactor::new(joint.cov())?.lower().clone());
            init_mean.push(joint.mean().clone());
        }
        let mut transition = Vec::with_capacity(k * k);
        let mut noise_lower = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let b = model.block(i, j);
                transition.push(b.transition());
                noise_lower.push(SpdFactor::new(&b.noise_cov()).map_err(|e| e.at_pair(i, j))?.lower().clone());
            }
        }
        Ok(Self {
            model,
            init_mean,
            init_lower,
            transition,
            noise_lower,
        })
    }

    /// `z_0 ~ p(z_0 | r_0)`, `z_k ~ N(B(r_{k-1}, r_k) z_{k-1}, Sigma(r_{k-1}, r_k))`.
    /// The returned `seed` is 0; [`simulate`] fills it in.
    pub fn sample<R: Rng + ?Sized>(&self, regimes: &[usize], rng: &mut R) -> Result<Trajectory> {
        let k = self.model.k();
        if let Some(&bad) = regimes.iter().find(|&&r| r >= k) {
            return Err(Error::InvalidConfig(format!("regime label {bad} out of range for K = {k}")));
        }
        let Some(&r0) = regimes.first() else {
            return Err(Error::InvalidConfig("empty regime sequence".into()));
        };
        let (m, p) = (self.model.state_dim(), self.model.obs_dim());
        let n = m + p;
        let mut z = &self.init_mean[r0] + &self.init_lower[r0] * standard_normal(n, rng);
        let mut states = Vec::with_capacity(regimes.len());
        let mut observations = Vec::with_capacity(regimes.len());
        states.push(z.rows(0, m).into_owned());
        observations.push(z.rows(m, p).into_owned());
        for w in regimes.windows(2) {
            let idx = w[0] * k + w[1];
            z = &self.transition[idx] * &z + &self.noise_lower[idx] * standard_normal(n, rng);
            states.push(z.rows(0, m).into_owned());
            observations.push(z.rows(m, p).into_owned());
        }
        Ok(Trajectory {
            regimes: regimes.to_vec(),
            states,
            observations,
            seed: 0,
        })
    }
}

/// Samples `(x, y)` along a given regime sequence.
pub fn sample_trajectory<R: Rng + ?Sized>(
    model: &ConditionalPmcModel,
    regimes: &[usize],
    rng: &mut R,
) -> Result<Trajectory> {
    TrajectorySampler::new(model)?.sample(regimes, rng)
}

/// Draws a regime path and a trajectory of horizon `T` from one seeded stream.
pub fn simulate(model: &ConditionalPmcModel, horizon: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = rng_from_seed(seed);
    let regimes = sample_jump_chain(model.chain(), horizon, &mut rng)?;
    let mut traj = sample_trajectory(model, &regimes, &mut rng)?;
    traj.seed = seed;
    Ok(traj)
}
