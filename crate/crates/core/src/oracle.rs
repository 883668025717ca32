//! Slow reference computations for checking the filters.
//!
//! Nothing here shares code with the jump filter's recursion: enumeration
//! runs one fixed-regime Kalman filter per regime sequence, and the batch
//! posterior conditions the full joint Gaussian of `z_{0:T}` at once.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::kalman::{kalman_update_init, pmc_kalman_step_with_likelihood};
use crate::gaussian::Gaussian;
use crate::linalg::{self, SpdFactor};
use crate::model::{ConditionalPmcModel, PmcBlocks, RegimeParams};

/// Largest number of regime sequences enumerated by default.
pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Exact filtering law at the last time step, grouped by `r_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    /// `log p(r_T | y_{0:T})`.
    pub log_weights: Vec<f64>,
    /// `E[x_T | y_{0:T}, r_T]`.
    pub means: Vec<DVector<f64>>,
    /// `E[x_T x_T^T | y_{0:T}, r_T]`.
    pub second_moments: Vec<DMatrix<f64>>,
    /// `log p(y_{0:T})`.
    pub log_evidence: f64,
}

impl ExactPosterior {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.weights()
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.means[0].len()), |acc, (w, m)| acc + m * *w)
    }
}

/// Per-`r_T` sums of `exp(logw - shift)`, `... * mean`, `... * second moment`.
#[derive(Clone)]
struct Accumulator {
    shift: Vec<f64>,
    mass: Vec<f64>,
    first: Vec<DVector<f64>>,
    second: Vec<DMatrix<f64>>,
}

impl Accumulator {
    fn new(k: usize, m: usize) -> Self {
        Self {
            shift: vec![f64::NEG_INFINITY; k],
            mass: vec![0.0; k],
            first: vec![DVector::zeros(m); k],
            second: vec![DMatrix::zeros(m, m); k],
        }
    }

    fn rescale(&mut self, r: usize, shift: f64) {
        if shift > self.shift[r] {
            let c = if self.shift[r].is_finite() { (self.shift[r] - shift).exp() } else { 0.0 };
            self.mass[r] *= c;
            self.first[r] *= c;
            self.second[r] *= c;
            self.shift[r] = shift;
        }
    }

    fn add(&mut self, r: usize, log_w: f64, post: &Gaussian) {
        if log_w == f64::NEG_INFINITY {
            return;
        }
        self.rescale(r, log_w);
        let w = (log_w - self.shift[r]).exp();
        self.mass[r] += w;
        self.first[r].axpy(w, post.mean(), 1.0);
        self.second[r] += post.second_moment() * w;
    }

    fn merge(mut self, other: Accumulator) -> Self {
        for r in 0..self.mass.len() {
            if other.shift[r] == f64::NEG_INFINITY {
                continue;
            }
            self.rescale(r, other.shift[r]);
            let c = (other.shift[r] - self.shift[r]).exp();
            self.mass[r] += other.mass[r] * c;
            self.first[r] += &other.first[r] * c;
            self.second[r] += &other.second[r] * c;
        }
        self
    }

    fn finish(self) -> Result<ExactPosterior> {
        let log_mass: Vec<f64> = self.mass.iter().zip(&self.shift).map(|(m, s)| m.ln() + s).collect();
        let log_evidence = linalg::logsumexp(&log_mass);
        if !log_evidence.is_finite() {
            return Err(Error::DegenerateLikelihood { step: 0 });
        }
        let means = self.first.iter().zip(&self.mass).map(|(f, m)| f / *m).collect();
        let second_moments = self
            .second
            .iter()
            .zip(&self.mass)
            .map(|(s, m)| linalg::symmetrize(&(s / *m)))
            .collect();
        Ok(ExactPosterior {
            log_weights: log_mass.iter().map(|l| l - log_evidence).collect(),
            means,
            second_moments,
            log_evidence,
        })
    }
}

/// Depth-first walk over every continuation of a regime prefix.
fn descend(
    model: &ConditionalPmcModel,
    ys: &[DVector<f64>],
    k: usize,
    r: usize,
    post: &Gaussian,
    log_w: f64,
    acc: &mut Accumulator,
) -> Result<()> {
    if k + 1 == ys.len() {
        acc.add(r, log_w, post);
        return Ok(());
    }
    let trans = model.chain().trans();
    for next in 0..model.k() {
        let p = trans[(r, next)];
        if p == 0.0 {
            continue;
        }
        let (child, ll) = pmc_kalman_step_with_likelihood(post, &ys[k], &ys[k + 1], model.block(r, next))?;
        descend(model, ys, k + 1, next, &child, log_w + p.ln() + ll, acc)?;
    }
    Ok(())
}

/// Sums over all `K^{T+1}` regime sequences for `y_{0:T}`, each handled by a
/// fixed-regime pairwise Kalman filter, and combines them by Bayes' rule.
pub fn enumerate_exact_posterior(
    model: &ConditionalPmcModel,
    ys: &[DVector<f64>],
    budget: u128,
) -> Result<ExactPosterior> {
    if ys.is_empty() {
        return Err(Error::InvalidConfig("enumeration needs at least one observation".into()));
    }
    let k = model.k();
    let required = (k as u128).checked_pow(ys.len() as u32).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let m = model.state_dim();
    let parts = (0..k)
        .into_par_iter()
        .map(|r0| {
            let mut acc = Accumulator::new(k, m);
            let pi = model.chain().initial()[r0];
            if pi > 0.0 {
                let (post, ll) = kalman_update_init(model.regime(r0), &ys[0])?;
                descend(model, ys, 0, r0, &post, pi.ln() + ll, &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    parts
        .into_iter()
        .reduce(Accumulator::merge)
        .expect("at least one regime")
        .finish()
        .map_err(|e| match e {
            Error::DegenerateLikelihood { .. } => Error::DegenerateLikelihood { step: ys.len() - 1 },
            e => e,
        })
}

/// Posterior of `x_T` and `log p(y_{0:T})` for one fixed regime sequence,
/// by conditioning the dense joint Gaussian of `z_{0:T}`.
///
/// `blocks[k - 1]` drives the transition from `z_{k-1}` to `z_k`, so
/// `blocks.len() + 1 == ys.len()`.
pub fn batch_gaussian_posterior(
    initial: &RegimeParams,
    blocks: &[&PmcBlocks],
    ys: &[DVector<f64>],
) -> Result<(Gaussian, f64)> {
    let steps = ys.len();
    if blocks.len() + 1 != steps {
        return Err(Error::DimensionMismatch {
            context: "batch posterior blocks",
            expected: steps.saturating_sub(1),
            found: blocks.len(),
        });
    }
    let (m, p) = (initial.state_dim(), initial.obs_dim());
    let n = m + p;
    let dim = n * steps;
    let mut mean = DVector::zeros(dim);
    let mut cov = DMatrix::zeros(dim, dim);
    let z0 = initial.initial_joint();
    mean.rows_mut(0, n).copy_from(z0.mean());
    cov.view_mut((0, 0), (n, n)).copy_from(z0.cov());
    for (k, b) in blocks.iter().enumerate().map(|(i, b)| (i + 1, b)) {
        let bmat = b.transition();
        let prev_mean = mean.rows((k - 1) * n, n).into_owned();
        mean.rows_mut(k * n, n).copy_from(&(&bmat * prev_mean));
        // Cov(z_k, z_j) = B Cov(z_{k-1}, z_j) for j < k
        let prev_rows = cov.view(((k - 1) * n, 0), (n, k * n)).into_owned();
        let cross = &bmat * prev_rows;
        cov.view_mut((k * n, 0), (n, k * n)).copy_from(&cross);
        cov.view_mut((0, k * n), (k * n, n)).copy_from(&cross.transpose());
        let prev_block = cov.view(((k - 1) * n, (k - 1) * n), (n, n)).into_owned();
        let diag = &bmat * prev_block * bmat.transpose() + b.noise_cov();
        cov.view_mut((k * n, k * n), (n, n)).copy_from(&linalg::symmetrize(&diag));
    }
    let y_idx: Vec<usize> = (0..steps).flat_map(|k| (k * n + m)..((k + 1) * n)).collect();
    let x_idx: Vec<usize> = ((steps - 1) * n..(steps - 1) * n + m).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i], cols[j])]);
    let syy = pick(&y_idx, &y_idx);
    let sxy = pick(&x_idx, &y_idx);
    let sxx = pick(&x_idx, &x_idx);
    let y_all = DVector::from_iterator(steps * p, ys.iter().flat_map(|y| y.iter().copied()));
    let mu_y = DVector::from_iterator(y_idx.len(), y_idx.iter().map(|&i| mean[i]));
    let mu_x = DVector::from_iterator(m, x_idx.iter().map(|&i| mean[i]));
    let factor = SpdFactor::new(&syy)?;
    let resid = &y_all - &mu_y;
    let log_evidence = factor.log_density_centered(&resid);
    let post_mean = mu_x + &sxy * factor.solve_vec(&resid);
    let post_cov = sxx - &sxy * factor.solve(&sxy.transpose());
    Ok((Gaussian::from_parts(post_mean, linalg::symmetrize(&post_cov)), log_evidence))
}

/// [`batch_gaussian_posterior`] along a regime sequence of `model`.
pub fn batch_posterior_for_sequence(
    model: &ConditionalPmcModel,
    regimes: &[usize],
    ys: &[DVector<f64>],
) -> Result<(Gaussian, f64)> {
    let Some(&r0) = regimes.first() else {
        return Err(Error::InvalidConfig("empty regime sequence".into()));
    };
    let blocks: Vec<&PmcBlocks> = regimes.windows(2).map(|w| model.block(w[0], w[1])).collect();
    batch_gaussian_posterior(model.regime(r0), &blocks, ys)
}

/// Mean divergence between the one-step observation predictors of the
/// scalar state-space model and its exactly filterable pairwise
/// counterpart: `-0.5 ln(1 - a^2 (R/Q) / (R/Q + b^2))`.
pub fn mean_kld_scalar(a: f64, b: f64, q: f64, r: f64) -> Result<f64> {
    let ratio = r / q;
    let arg = 1.0 - a * a * ratio / (ratio + b * b);
    if !(arg > 0.0) || !arg.is_finite() {
        return Err(Error::Domain(format!("log argument {arg} is not positive")));
    }
    Ok(-0.5 * arg.ln())
}

/// Monte Carlo estimate of `E_p[log p - log q]` with its standard error.
pub fn mc_kld<S>(
    mut sample: impl FnMut() -> S,
    log_p: impl Fn(&S) -> f64,
    log_q: impl Fn(&S) -> f64,
    n: usize,
) -> Result<(f64, f64)> {
    if n < 1000 {
        return Err(Error::InvalidConfig(format!("need at least 1000 samples, got {n}")));
    }
    let terms: Vec<f64> = (0..n)
        .map(|_| {
            let s = sample();
            log_p(&s) - log_q(&s)
        })
        .collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}
