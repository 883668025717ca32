use nalgebra::DMatrix;

use super::{BuildPolicy, ConditionalPmcModel, F2Policy, H2Policy, JumpChain, PmcBlocks, RegimeParams};
use crate::error::{Error, Result};
use crate::gaussian::{affine_marginal, Gaussian};
use crate::linalg::{self, SpdFactor};

/// Relative tolerance on the marginalized-transition identity.
pub const INVARIANCE_TOL: f64 = 1e-10;

/// Relative tolerance on `H(r_k) F(r_k) - H2 H(r_{k-1})`.
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Blocks of the hidden Markov chain of `reg` written as a pairwise chain.
pub fn hmc_as_pmc(reg: &RegimeParams) -> PmcBlocks {
    let (m, p) = (reg.state_dim(), reg.obs_dim());
    let hq = &reg.h * &reg.q;
    PmcBlocks {
        f1: reg.f.clone(),
        f2: DMatrix::zeros(m, p),
        h1: &reg.h * &reg.f,
        h2: DMatrix::zeros(p, p),
        s11: reg.q.clone(),
        s21: hq.clone(),
        s22: linalg::symmetrize(&(&reg.r + &hq * reg.h.transpose())),
    }
}

/// Pairwise blocks that keep the physics of `cur` for any choice of
/// `(F2, H2)`, provided the assembled noise covariance stays positive definite.
pub fn constrained_pmc(
    prev: &RegimeParams,
    cur: &RegimeParams,
    f2: &DMatrix<f64>,
    h2: &DMatrix<f64>,
) -> Result<PmcBlocks> {
    let (m, p) = (cur.state_dim(), cur.obs_dim());
    if prev.state_dim() != m || prev.obs_dim() != p {
        return Err(Error::DimensionMismatch {
            context: "constrained_pmc regimes",
            expected: m,
            found: prev.state_dim(),
        });
    }
    if f2.shape() != (m, p) {
        return Err(Error::DimensionMismatch {
            context: "constrained_pmc F2",
            expected: m * p,
            found: f2.len(),
        });
    }
    if h2.shape() != (p, p) {
        return Err(Error::DimensionMismatch {
            context: "constrained_pmc H2",
            expected: p * p,
            found: h2.len(),
        });
    }
    let hq = &cur.h * &cur.q;
    let r_prev_f2t = &prev.r * f2.transpose();
    let blocks = PmcBlocks {
        f1: &cur.f - f2 * &prev.h,
        f2: f2.clone(),
        h1: &cur.h * &cur.f - h2 * &prev.h,
        h2: h2.clone(),
        s11: linalg::symmetrize(&(&cur.q - f2 * &r_prev_f2t)),
        s21: &hq - h2 * &r_prev_f2t,
        s22: linalg::symmetrize(&((&cur.r - h2 * &prev.r * h2.transpose()) + &hq * cur.h.transpose())),
    };
    linalg::require_pd(&blocks.noise_cov(), || {
        format!(
            "pairwise noise covariance (smallest pivot {:e})",
            linalg::pd_margin(&blocks.noise_cov())
        )
    })?;
    Ok(blocks)
}

/// `H2 = H(cur) F(cur) H(prev)^+`, verified to solve the observation
/// constraint within `tol` (relative Frobenius residual).
pub fn solve_h2(prev: &RegimeParams, cur: &RegimeParams, tol: f64) -> Result<DMatrix<f64>> {
    let target = &cur.h * &cur.f;
    let h2 = &target * linalg::pseudo_inverse(&prev.h);
    let residual = (&target - &h2 * &prev.h).norm();
    let scale = target.norm();
    let rel = if scale > 0.0 { residual / scale } else { residual };
    if rel > tol || !rel.is_finite() {
        return Err(Error::NoSolution { residual: rel, tol });
    }
    Ok(h2)
}

/// `F2 = Q H^T (R + H Q H^T)^{-1} H2` at the current regime.
pub fn optimal_f2(_prev: &RegimeParams, cur: &RegimeParams, h2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = cur.obs_dim();
    if h2.shape() != (p, p) {
        return Err(Error::DimensionMismatch {
            context: "optimal_f2 H2",
            expected: p * p,
            found: h2.len(),
        });
    }
    let hq = &cur.h * &cur.q;
    let innovation = SpdFactor::new(&(&cur.r + &hq * cur.h.transpose()))?;
    let gain = innovation.solve(&hq).transpose();
    Ok(gain * h2)
}

fn square_obs(reg: &RegimeParams, what: &str) -> Result<()> {
    if reg.state_dim() != reg.obs_dim() {
        return Err(Error::InvalidModel(format!(
            "{what} needs state and observation dimensions to agree ({} vs {})",
            reg.state_dim(),
            reg.obs_dim()
        )));
    }
    Ok(())
}

fn table_entry<'a>(table: &'a [Vec<DMatrix<f64>>], i: usize, j: usize) -> Result<&'a DMatrix<f64>> {
    table
        .get(i)
        .and_then(|row| row.get(j))
        .ok_or_else(|| Error::InvalidModel(format!("explicit table has no entry ({i}, {j})")))
}

/// Builds every pairwise block from the regimes under `policy`.
pub fn build_conditional_pmc(
    chain: JumpChain,
    regimes: Vec<RegimeParams>,
    policy: BuildPolicy,
) -> Result<ConditionalPmcModel> {
    let k = chain.k();
    if regimes.len() != k {
        return Err(Error::InvalidModel(format!(
            "{} regimes for a {k}-state chain",
            regimes.len()
        )));
    }
    let mut table = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let block = pair_block(&regimes[i], &regimes[j], &policy, i, j).map_err(|e| e.at_pair(i, j))?;
            row.push(block);
        }
        table.push(row);
    }
    ConditionalPmcModel::from_parts(chain, regimes, table, Some(policy))
}

fn pair_block(
    prev: &RegimeParams,
    cur: &RegimeParams,
    policy: &BuildPolicy,
    i: usize,
    j: usize,
) -> Result<PmcBlocks> {
    let (m, p) = (cur.state_dim(), cur.obs_dim());
    let h2 = match &policy.h2 {
        H2Policy::Zero => DMatrix::zeros(p, p),
        H2Policy::Explicit(t) => table_entry(t, i, j)?.clone(),
        H2Policy::SolveConstraint => solve_h2(prev, cur, CONSTRAINT_TOL)?,
        H2Policy::ScaledH(alpha) => {
            square_obs(cur, "scaled H2")?;
            &cur.h * *alpha
        }
        H2Policy::ScaledConstraint(alpha) => solve_h2(prev, cur, CONSTRAINT_TOL)? * *alpha,
    };
    let f2 = match &policy.f2 {
        F2Policy::Zero => DMatrix::zeros(m, p),
        F2Policy::Explicit(t) => table_entry(t, i, j)?.clone(),
        F2Policy::KldOptimal => optimal_f2(prev, cur, &h2)?,
        F2Policy::ScaledF(alpha) => {
            square_obs(cur, "scaled F2")?;
            &cur.f * *alpha
        }
    };
    constrained_pmc(prev, cur, &f2, &h2)
}

/// Per-pair admissibility and structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub from: usize,
    pub to: usize,
    /// Smallest squared Cholesky pivot of the assembled noise covariance.
    pub pd_margin: f64,
    pub pd_ok: bool,
    /// Relative gap between the `y_{k-1}`-marginalized transition and
    /// `f(x_k | x_{k-1}) g(y_k | x_k)` of the current regime.
    pub invariance_residual: f64,
    pub invariance_ok: bool,
    /// Relative residual of `H(r_k) F(r_k) - H2 H(r_{k-1})`.
    pub constraint_residual: f64,
    /// Whether the model was built to satisfy the constraint.
    pub constraint_required: bool,
    pub constraint_ok: bool,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.pd_ok && self.invariance_ok && (!self.constraint_required || self.constraint_ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub pairs: Vec<PairReport>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(PairReport::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PairReport> {
        self.pairs.iter().filter(|p| !p.passed())
    }

    pub fn max_invariance_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.invariance_residual).fold(0.0, f64::max)
    }

    /// True when every block zeroes the state-to-observation coupling, i.e.
    /// the exact jump recursion applies.
    pub fn exactly_filterable(&self) -> bool {
        self.pairs.iter().all(|p| p.constraint_ok)
    }
}

/// Checks every pair of `model`; never fails, the report carries the flags.
pub fn validate_model(model: &ConditionalPmcModel) -> ValidationReport {
    let k = model.k();
    let constraint_required = matches!(
        model.policy(),
        Some(BuildPolicy {
            h2: H2Policy::SolveConstraint,
            ..
        })
    );
    let mut pairs = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let prev = model.regime(i);
            let cur = model.regime(j);
            let block = model.block(i, j);
            let sigma = block.noise_cov();
            let pd_margin = linalg::pd_margin(&sigma);
            let pd_ok = pd_margin > linalg::default_pd_threshold(&sigma);

            let invariance_residual = invariance_residual(prev, cur, block);
            let target = &cur.h * &cur.f;
            let constraint_abs = (&target - &block.h2 * &prev.h).norm();
            let scale = target.norm();
            let constraint_residual = if scale > 0.0 { constraint_abs / scale } else { constraint_abs };
            pairs.push(PairReport {
                from: i,
                to: j,
                pd_margin,
                pd_ok,
                invariance_residual,
                invariance_ok: invariance_residual <= INVARIANCE_TOL,
                constraint_residual,
                constraint_required,
                constraint_ok: constraint_residual <= CONSTRAINT_TOL
                    && linalg::max_abs(&block.h1) <= CONSTRAINT_TOL * linalg::max_abs(&target).max(1.0),
            });
        }
    }
    let mut warnings = Vec::new();
    for (r, reg) in model.regimes().iter().enumerate() {
        let sv = reg.f.clone().svd(false, false).singular_values;
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if lo <= 1e-12 * hi.max(1.0) {
            warnings.push(format!("regime {r}: state transition F is numerically singular"));
        }
    }
    ValidationReport { pairs, warnings }
}

/// Marginalizes `y_{k-1} ~ N(H_prev x_{k-1}, R_prev)` out of the pairwise
/// transition and compares with the hidden-Markov transition of `cur`.
fn invariance_residual(prev: &RegimeParams, cur: &RegimeParams, block: &PmcBlocks) -> f64 {
    let obs_cols = block.observation_columns();
    let mean_coeff = block.state_columns() + &obs_cols * &prev.h;
    let sigma = block.noise_cov();
    let y_prev = Gaussian::from_parts(nalgebra::DVector::zeros(prev.obs_dim()), prev.r.clone());
    let cov = affine_marginal(&obs_cols, &nalgebra::DVector::zeros(sigma.nrows()), &sigma, &y_prev)
        .map(|g| g.cov().clone())
        .unwrap_or_else(|_| &sigma + &obs_cols * &prev.r * obs_cols.transpose());

    let reference = hmc_as_pmc(cur);
    let ref_coeff = reference.state_columns();
    let ref_cov = reference.noise_cov();
    linalg::rel_diff(&mean_coeff, &ref_coeff).max(linalg::rel_diff(&cov, &ref_cov))
}
