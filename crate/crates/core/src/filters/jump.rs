//! Exact filter for conditional pairwise Markov chains with jumps whose
//! blocks satisfy `H1 = 0`.
//!
//! The state carries, per regime `r`, `log p(r_k = r | y_{0:k})` together with
//! the first two conditional moments of `x_k`. One step costs `O(K^2)` small
//! matrix products whatever `k` is.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gaussian::{condition, JointGaussianBlocks};
use crate::linalg::{self, SpdFactor};
use crate::model::{ConditionalPmcModel, CONSTRAINT_TOL};

/// Pairs whose log-weight falls this far below the best pair are dropped.
pub const UNDERFLOW_GAP: f64 = 700.0;

/// Per-pair matrices of the recursion, computed once per model.
#[derive(Debug, Clone)]
pub struct PairStep {
    /// Coefficient of `x_{k-1}` in `E[x_k | x_{k-1}, y_{k-1:k}]`.
    pub c: DMatrix<f64>,
    /// `Cov(x_k | x_{k-1}, y_{k-1:k})`.
    pub sigma_x: DMatrix<f64>,
    /// Mean of `y_k` given `y_{k-1}` is `h2 y_{k-1}`.
    pub h2: DMatrix<f64>,
    /// Covariance of `y_k` given `y_{k-1}` (the `S22` block).
    pub obs_cov: DMatrix<f64>,
    pub obs_factor: SpdFactor,
    /// `S21^T S22^{-1}`.
    pub gain: DMatrix<f64>,
    pub f2: DMatrix<f64>,
}

impl PairStep {
    /// `D = F2 y_{k-1} + gain (y_k - H2 y_{k-1})`, and the innovation used for
    /// the pair likelihood.
    fn offset(&self, y_prev: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let innovation = y - &self.h2 * y_prev;
        let d = &self.f2 * y_prev + &self.gain * &innovation;
        (d, innovation)
    }
}

/// `K x K` table of [`PairStep`], row-major in `(r_{k-1}, r_k)`.
#[derive(Debug, Clone)]
pub struct StepMatrices {
    k: usize,
    pairs: Vec<PairStep>,
}

impl StepMatrices {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pair(&self, from: usize, to: usize) -> &PairStep {
        &self.pairs[from * self.k + to]
    }
}

/// Builds the step table; fails with `ConstraintViolated` if some block lets
/// `y_k` depend on `x_{k-1}`.
pub fn precompute_step_matrices(model: &ConditionalPmcModel) -> Result<StepMatrices> {
    let k = model.k();
    let mut pairs = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let b = model.block(i, j);
            let cur = model.regime(j);
            let scale = linalg::max_abs(&(&cur.h * &cur.f)).max(1.0);
            let residual = linalg::max_abs(&b.h1);
            if residual > CONSTRAINT_TOL * scale {
                return Err(Error::ConstraintViolated {
                    from: i,
                    to: j,
                    residual,
                });
            }
            let obs_factor = SpdFactor::new(&b.s22).map_err(|e| e.at_pair(i, j))?;
            let gain = obs_factor.solve(&b.s21).transpose();
            let sigma_x = linalg::symmetrize(&(&b.s11 - &gain * &b.s21));
            pairs.push(PairStep {
                c: b.f1.clone(),
                sigma_x,
                h2: b.h2.clone(),
                obs_cov: b.s22.clone(),
                obs_factor,
                gain,
                f2: b.f2.clone(),
            });
        }
    }
    Ok(StepMatrices { k, pairs })
}

/// Filtering distribution after `y_{0:k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpFilterState {
    /// `log p(r_k | y_{0:k})`, normalized.
    pub log_weights: Vec<f64>,
    /// `E[x_k | y_{0:k}, r_k]`.
    pub means: Vec<DVector<f64>>,
    /// `E[x_k x_k^T | y_{0:k}, r_k]`.
    pub second_moments: Vec<DMatrix<f64>>,
    pub prev_observation: DVector<f64>,
    /// Index `k` of the last observation absorbed.
    pub step: usize,
}

impl JumpFilterState {
    pub fn k(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `|log sum_r p(r_k | y_{0:k})|`.
    pub fn normalization_error(&self) -> f64 {
        linalg::logsumexp(&self.log_weights).abs()
    }

    /// Smallest eigenvalue of `M_r - mu_r mu_r^T` over regimes with non-zero
    /// weight, divided by `max(1, |M_r|)`.
    pub fn min_relative_cov_eigenvalue(&self) -> f64 {
        self.means
            .iter()
            .zip(&self.second_moments)
            .zip(&self.log_weights)
            .filter(|(_, w)| w.is_finite())
            .map(|((mu, m), _)| {
                let cov = linalg::symmetrize(&(m - mu * mu.transpose()));
                let lo = SymmetricEigen::new(cov).eigenvalues.min();
                lo / linalg::max_abs(m).max(1.0)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Posterior mixture moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEstimate {
    pub mean: DVector<f64>,
    pub second_moment: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub mode_probs: Vec<f64>,
}

impl MixtureEstimate {
    /// Mixture of `(weight, mean, second moment)` components; weights must sum to one.
    pub fn from_components<'a>(
        components: impl IntoIterator<Item = (f64, &'a DVector<f64>, &'a DMatrix<f64>)>,
        mode_probs: Vec<f64>,
    ) -> Self {
        let mut it = components.into_iter().peekable();
        let n = it.peek().map_or(0, |(_, m, _)| m.len());
        let mut mean = DVector::zeros(n);
        let mut second = DMatrix::zeros(n, n);
        for (w, m, s) in it {
            if w == 0.0 {
                continue;
            }
            mean.axpy(w, m, 1.0);
            second += s * w;
        }
        let second_moment = linalg::symmetrize(&second);
        let cov = linalg::symmetrize(&(&second_moment - &mean * mean.transpose()));
        Self {
            mean,
            second_moment,
            cov,
            mode_probs,
        }
    }
}

fn normalize(log_weights: &mut [f64]) -> f64 {
    let total = linalg::logsumexp(log_weights);
    for w in log_weights.iter_mut() {
        *w -= total;
    }
    total
}

/// Drops entries more than [`UNDERFLOW_GAP`] below the maximum.
fn apply_floor(values: &mut [f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_finite() {
        for v in values.iter_mut() {
            if *v < max - UNDERFLOW_GAP {
                *v = f64::NEG_INFINITY;
            }
        }
    }
    max
}

/// Conditions each regime's initial law of `z_0` on `y_0`.
pub fn jump_filter_init(model: &ConditionalPmcModel, y0: &DVector<f64>) -> Result<JumpFilterState> {
    let (m, p) = (model.state_dim(), model.obs_dim());
    if y0.len() != p {
        return Err(Error::DimensionMismatch {
            context: "initial observation",
            expected: p,
            found: y0.len(),
        });
    }
    let k = model.k();
    let mut log_weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut second_moments = Vec::with_capacity(k);
    for r in 0..k {
        let joint = JointGaussianBlocks::split(&model.regime(r).initial_joint(), m)?;
        let ll = SpdFactor::new(&joint.cov_eta)?.log_density_centered(&(y0 - &joint.mean_eta));
        let post = condition(&joint, y0)?;
        log_weights.push(model.chain().initial()[r].ln() + ll);
        second_moments.push(post.second_moment());
        means.push(post.mean().clone());
    }
    let max = apply_floor(&mut log_weights);
    if !max.is_finite() {
        return Err(Error::DegenerateInitialization);
    }
    normalize(&mut log_weights);
    Ok(JumpFilterState {
        log_weights,
        means,
        second_moments,
        prev_observation: y0.clone(),
        step: 0,
    })
}

/// Absorbs `y_k`.
pub fn jump_filter_step(
    state: &JumpFilterState,
    y: &DVector<f64>,
    model: &ConditionalPmcModel,
    table: &StepMatrices,
) -> Result<JumpFilterState> {
    let k = model.k();
    let p = model.obs_dim();
    if y.len() != p {
        return Err(Error::DimensionMismatch {
            context: "observation",
            expected: p,
            found: y.len(),
        });
    }
    if table.k() != k || state.k() != k {
        return Err(Error::InvalidModel("state, table and model disagree on K".into()));
    }
    let y_prev = &state.prev_observation;
    let trans = model.chain().trans();

    // a[i * k + j] = log p(r_k = j | r_{k-1} = i) + log p(y_k | y_{k-1}, i, j) + log w_i
    let mut joint = vec![f64::NEG_INFINITY; k * k];
    let mut offsets: Vec<Option<DVector<f64>>> = vec![None; k * k];
    for i in 0..k {
        let lw = state.log_weights[i];
        if lw == f64::NEG_INFINITY {
            continue;
        }
        for j in 0..k {
            let tp = trans[(i, j)];
            if tp == 0.0 {
                continue;
            }
            let pair = table.pair(i, j);
            let (d, innovation) = pair.offset(y_prev, y);
            joint[i * k + j] = tp.ln() + pair.obs_factor.log_density_centered(&innovation) + lw;
            offsets[i * k + j] = Some(d);
        }
    }

    let mut floored = joint.clone();
    let max = apply_floor(&mut floored);
    if !max.is_finite() {
        return Err(Error::DegenerateLikelihood { step: state.step + 1 });
    }
    let mut log_weights: Vec<f64> = (0..k)
        .map(|j| {
            let column: Vec<f64> = (0..k).map(|i| floored[i * k + j]).collect();
            linalg::logsumexp(&column)
        })
        .collect();
    normalize(&mut log_weights);

    let m = model.state_dim();
    let mut means = Vec::with_capacity(k);
    let mut second_moments = Vec::with_capacity(k);
    for j in 0..k {
        // p(r_{k-1} = i | r_k = j, y_{0:k}), from the unfloored column so the
        // conditional moments stay defined when regime j itself is negligible.
        let column: Vec<f64> = (0..k).map(|i| joint[i * k + j]).collect();
        let lse = linalg::logsumexp(&column);
        let backward: Vec<f64> = if lse.is_finite() {
            column.iter().map(|a| (a - lse).exp()).collect()
        } else {
            state.weights()
        };
        let mut mean = DVector::zeros(m);
        let mut second = DMatrix::zeros(m, m);
        for (i, &beta) in backward.iter().enumerate() {
            if beta == 0.0 {
                continue;
            }
            let pair = table.pair(i, j);
            let d = match &offsets[i * k + j] {
                Some(d) => d.clone(),
                None => pair.offset(y_prev, y).0,
            };
            let mu = &state.means[i];
            let c_mu = &pair.c * mu;
            let mut term = &pair.sigma_x + &pair.c * &state.second_moments[i] * pair.c.transpose();
            term += &d * c_mu.transpose() + &c_mu * d.transpose() + &d * d.transpose();
            mean.axpy(beta, &(c_mu + &d), 1.0);
            second += term * beta;
        }
        means.push(mean);
        second_moments.push(linalg::symmetrize(&second));
    }
    Ok(JumpFilterState {
        log_weights,
        means,
        second_moments,
        prev_observation: y.clone(),
        step: state.step + 1,
    })
}

/// `E[x_k | y_{0:k}]`, `E[x_k x_k^T | y_{0:k}]` and the regime posterior.
pub fn estimate(state: &JumpFilterState) -> MixtureEstimate {
    let w = state.weights();
    MixtureEstimate::from_components(
        w.iter()
            .zip(&state.means)
            .zip(&state.second_moments)
            .map(|((&w, m), s)| (w, m, s)),
        w.clone(),
    )
}

/// Bundles a model with its step table.
#[derive(Debug, Clone)]
pub struct JumpFilter<'a> {
    model: &'a ConditionalPmcModel,
    table: StepMatrices,
}

impl<'a> JumpFilter<'a> {
    pub fn new(model: &'a ConditionalPmcModel) -> Result<Self> {
        Ok(Self {
            model,
            table: precompute_step_matrices(model)?,
        })
    }

    pub fn table(&self) -> &StepMatrices {
        &self.table
    }

    pub fn init(&self, y0: &DVector<f64>) -> Result<JumpFilterState> {
        jump_filter_init(self.model, y0)
    }

    pub fn step(&self, state: &JumpFilterState, y: &DVector<f64>) -> Result<JumpFilterState> {
        jump_filter_step(state, y, self.model, &self.table)
    }

    /// Runs over `y_{0:T}`, calling `inspect` on every state.
    pub fn run(
        &self,
        ys: &[DVector<f64>],
        mut inspect: impl FnMut(&JumpFilterState),
    ) -> Result<Vec<MixtureEstimate>> {
        let Some((y0, rest)) = ys.split_first() else {
            return Ok(Vec::new());
        };
        let mut state = self.init(y0)?;
        inspect(&state);
        let mut out = Vec::with_capacity(ys.len());
        out.push(estimate(&state));
        for y in rest {
            state = self.step(&state, y)?;
            inspect(&state);
            out.push(estimate(&state));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kalman::{kalman_update_init, pmc_kalman_step};
    use crate::model::{build_conditional_pmc, scenarios, BuildPolicy, JumpChain, RegimeParams};
    use nalgebra::dmatrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_optimal() -> ConditionalPmcModel {
        scenarios::scalar_optimal(1.0).unwrap()
    }

    #[test]
    fn scalar_step_matrices() {
        let model = scalar_optimal();
        let t = precompute_step_matrices(&model).unwrap();
        let s = t.pair(0, 0);
        assert!((s.c[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s.obs_cov[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((s.gain[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s.sigma_x[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hidden_markov_blocks_are_rejected() {
        let model = scenarios::scalar_jump_jmss().unwrap();
        assert!(matches!(
            precompute_step_matrices(&model),
            Err(Error::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn init_symmetric_case() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let reg = RegimeParams::new(i2.clone(), i2.clone(), i2.clone(), i2.clone(), DVector::zeros(2), i2.clone())
            .unwrap();
        let model = build_conditional_pmc(JumpChain::single(), vec![reg], BuildPolicy::exact_kld()).unwrap();
        let s = jump_filter_init(&model, &DVector::zeros(2)).unwrap();
        assert_eq!(s.log_weights, vec![0.0]);
        assert_eq!(s.means[0], DVector::zeros(2));
        assert!(linalg::rel_diff(&s.second_moments[0], &(&i2 * 0.5)) < 1e-15);
    }

    #[test]
    fn init_identical_regimes_gives_equal_weights() {
        let reg = RegimeParams::scalar(0.5, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        let chain = JumpChain::symmetric(3, 1.0 / 3.0).unwrap();
        let model = build_conditional_pmc(chain, vec![reg; 3], BuildPolicy::exact_kld()).unwrap();
        let s = jump_filter_init(&model, &v(&[1.3])).unwrap();
        for w in &s.log_weights {
            assert!((w - (1.0f64 / 3.0).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn init_identifies_regime_by_bayes_rule() {
        // Distinct initial means make y0 discriminative.
        let mut regs = scenarios::scalar_jump_regimes().unwrap();
        for (r, reg) in regs.iter_mut().enumerate() {
            reg.m0 = v(&[10.0 * r as f64]);
        }
        let model = build_conditional_pmc(scenarios::three_regime_chain(), regs.clone(), BuildPolicy::exact_kld())
            .unwrap();
        let y0 = v(&[20.5]);
        let s = jump_filter_init(&model, &y0).unwrap();
        let direct: Vec<f64> = regs
            .iter()
            .map(|reg| {
                let var = reg.r[(0, 0)] + reg.p0[(0, 0)];
                let d = y0[0] - reg.m0[0];
                (1.0 / 3.0) * (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            })
            .collect();
        let total: f64 = direct.iter().sum();
        let w = s.weights();
        for r in 0..3 {
            assert!((w[r] - direct[r] / total).abs() < 1e-12);
        }
        let best = (0..3).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert_eq!(best, 2);
    }

    #[test]
    fn single_regime_matches_pmc_kalman() {
        let model = scenarios::scalar_optimal(3.0).unwrap();
        let filter = JumpFilter::new(&model).unwrap();
        let ys: Vec<_> = [0.3, -1.2, 2.5, 0.1, 4.0, 3.3].iter().map(|&y| v(&[y])).collect();
        let mut state = filter.init(&ys[0]).unwrap();
        let (mut post, _) = kalman_update_init(model.regime(0), &ys[0]).unwrap();
        for w in ys.windows(2) {
            state = filter.step(&state, &w[1]).unwrap();
            post = pmc_kalman_step(&post, &w[0], &w[1], model.block(0, 0)).unwrap();
            assert!((state.means[0][0] - post.mean()[0]).abs() < 1e-10);
            assert!((&state.second_moments[0] - post.second_moment()).amax() < 1e-10);
        }
    }

    #[test]
    fn identical_regimes_keep_uniform_weights() {
        let reg = RegimeParams::scalar(0.9, 1.0, 2.0, 1.0, 0.0, 1.0).unwrap();
        let chain = JumpChain::symmetric(3, 1.0 / 3.0).unwrap();
        let model = build_conditional_pmc(chain, vec![reg; 3], BuildPolicy::exact_kld()).unwrap();
        let filter = JumpFilter::new(&model).unwrap();
        let ys: Vec<_> = (0..20).map(|k| v(&[(k as f64 * 0.7).sin() * 3.0])).collect();
        filter
            .run(&ys, |s| {
                for w in &s.log_weights {
                    assert!((w - (1.0f64 / 3.0).ln()).abs() < 1e-12);
                }
            })
            .unwrap();
    }

    #[test]
    fn estimate_mixture_arithmetic() {
        let state = JumpFilterState {
            log_weights: vec![0.5f64.ln(), 0.5f64.ln()],
            means: vec![v(&[1.0]), v(&[-1.0])],
            second_moments: vec![dmatrix![1.0], dmatrix![1.0]],
            prev_observation: v(&[0.0]),
            step: 0,
        };
        let e = estimate(&state);
        assert!(e.mean[0].abs() < 1e-15);
        assert!((e.second_moment[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((e.cov[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_matches_direct_mixture_moments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.1).collect();
        let total: f64 = raw.iter().sum();
        let means: Vec<_> = (0..4).map(|_| DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5)).collect();
        let covs: Vec<_> = (0..4)
            .map(|_| {
                let a = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
                &a * a.transpose()
            })
            .collect();
        let state = JumpFilterState {
            log_weights: raw.iter().map(|w| (w / total).ln()).collect(),
            means: means.clone(),
            second_moments: covs.iter().zip(&means).map(|(c, m)| c + m * m.transpose()).collect(),
            prev_observation: v(&[0.0]),
            step: 0,
        };
        let e = estimate(&state);
        // Law of total variance.
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let mean: DVector<f64> = means.iter().zip(&w).map(|(m, w)| m * *w).sum();
        let mut cov = DMatrix::zeros(3, 3);
        for r in 0..4 {
            let d = &means[r] - &mean;
            cov += (&covs[r] + &d * d.transpose()) * w[r];
        }
        assert!((e.mean - mean).amax() < 1e-14);
        assert!((e.cov - cov).amax() < 1e-13);
    }

    #[test]
    fn permutation_relabels_weights_and_keeps_estimate() {
        let model = scenarios::scalar_jump_filter_model().unwrap();
        let perm = [2, 0, 1];
        let permuted = model.relabel(&perm).unwrap();
        let ys: Vec<_> = [0.5, 3.0, -2.0, 7.5, 1.0, -4.0, 0.2].iter().map(|&y| v(&[y])).collect();
        let a = JumpFilter::new(&model).unwrap();
        let b = JumpFilter::new(&permuted).unwrap();
        let mut sa = a.init(&ys[0]).unwrap();
        let mut sb = b.init(&ys[0]).unwrap();
        for y in &ys[1..] {
            sa = a.step(&sa, y).unwrap();
            sb = b.step(&sb, y).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                assert!((sa.log_weights[old] - sb.log_weights[new]).abs() < 1e-12);
            }
            let (ea, eb) = (estimate(&sa), estimate(&sb));
            assert!((&ea.mean - &eb.mean).amax() < 1e-12 * ea.mean.amax().max(1.0));
        }
    }

    #[test]
    fn underflowing_regime_is_dropped_without_nan() {
        let regs = vec![
            RegimeParams::scalar(1.0, 1.0, 1e-4, 1e-4, 0.0, 100.0).unwrap(),
            RegimeParams::scalar(-1.0, 1.0, 1e-4, 1e-4, 0.0, 100.0).unwrap(),
        ];
        let model =
            build_conditional_pmc(JumpChain::symmetric(2, 0.99).unwrap(), regs, BuildPolicy::exact_kld()).unwrap();
        let filter = JumpFilter::new(&model).unwrap();
        let est = filter.run(&[v(&[10.0]), v(&[10.0]), v(&[10.0])], |_| {}).unwrap();
        for e in &est[1..] {
            assert!(e.mean.iter().all(|x| x.is_finite()));
            assert_eq!(e.mode_probs, vec![1.0, 0.0]);
        }
    }

    #[test]
    fn impossible_observation_is_degenerate() {
        let regs = vec![RegimeParams::scalar(1.0, 1.0, 1e-6, 1e-6, 0.0, 1e-6).unwrap()];
        let model = build_conditional_pmc(JumpChain::single(), regs, BuildPolicy::exact_kld()).unwrap();
        let filter = JumpFilter::new(&model).unwrap();
        // A single regime always normalizes, so force the weight off.
        let mut dead = filter.init(&v(&[0.0])).unwrap();
        dead.log_weights[0] = f64::NEG_INFINITY;
        assert!(matches!(filter.step(&dead, &v(&[1.0])), Err(Error::DegenerateLikelihood { step: 1 })));
    }
}
