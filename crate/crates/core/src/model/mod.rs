//! Physically constrained conditional PMC models.
//!
//! A [`ConditionalPmcModel`] pairs a jump chain and per-regime physical
//! parameters (`F`, `H`, `Q`, `R`, initial law) with a `K x K` table of
//! pairwise transition blocks indexed by `(r_{k-1}, r_k)`. Every block keeps
//! the physical transition `N(x_k; F x_{k-1}; Q)` and likelihood
//! `N(y_k; H x_k; R)` of its current regime; the free parameters `F2`/`H2`
//! only reshape how `y_{k-1}` feeds into `z_k`.

mod build;
pub mod scenarios;
mod schema;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg;

pub use build::{
    build_conditional_pmc, constrained_pmc, hmc_as_pmc, optimal_f2, solve_h2, validate_model,
    PairReport, ValidationReport, CONSTRAINT_TOL, INVARIANCE_TOL,
};
pub use schema::{BlocksDocument, ChainDocument, ModelDocument, PolicyDocument, PolicySpec, RegimeDocument};

/// Physical parameters of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeParams {
    /// State transition, `m x m`.
    pub f: DMatrix<f64>,
    /// Observation matrix, `p x m`.
    pub h: DMatrix<f64>,
    /// Process noise covariance, `m x m`.
    pub q: DMatrix<f64>,
    /// Observation noise covariance, `p x p`.
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl RegimeParams {
    pub fn new(
        f: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        m0: DVector<f64>,
        p0: DMatrix<f64>,
    ) -> Result<Self> {
        let m = f.nrows();
        let p = h.nrows();
        let shape_err = |context: &'static str, expected: usize, found: usize| Error::DimensionMismatch {
            context,
            expected,
            found,
        };
        if f.ncols() != m {
            return Err(shape_err("regime F", m, f.ncols()));
        }
        if h.ncols() != m {
            return Err(shape_err("regime H columns", m, h.ncols()));
        }
        if q.shape() != (m, m) {
            return Err(shape_err("regime Q", m, q.nrows()));
        }
        if r.shape() != (p, p) {
            return Err(shape_err("regime R", p, r.nrows()));
        }
        if m0.len() != m {
            return Err(shape_err("regime m0", m, m0.len()));
        }
        if p0.shape() != (m, m) {
            return Err(shape_err("regime P0", m, p0.nrows()));
        }
        linalg::check_symmetric(&q, "regime Q")?;
        linalg::check_symmetric(&r, "regime R")?;
        linalg::check_symmetric(&p0, "regime P0")?;
        linalg::require_pd(&q, || "regime Q".into())?;
        linalg::require_pd(&r, || "regime R".into())?;
        linalg::require_pd(&p0, || "regime P0".into())?;
        Ok(Self {
            f,
            h,
            q: linalg::symmetrize(&q),
            r: linalg::symmetrize(&r),
            m0,
            p0: linalg::symmetrize(&p0),
        })
    }

    /// One-dimensional regime `x_k = a x_{k-1} + u`, `y_k = b x_k + v`.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, m0: f64, p0: f64) -> Result<Self> {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(b), s(q), s(r), DVector::from_element(1, m0), s(p0))
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn prior(&self) -> Gaussian {
        Gaussian::from_parts(self.m0.clone(), self.p0.clone())
    }

    /// Joint law of `z_0 = (x_0, y_0)` given this regime at time 0.
    pub fn initial_joint(&self) -> Gaussian {
        let (m, p) = (self.state_dim(), self.obs_dim());
        let hp = &self.h * &self.p0;
        let mut mean = DVector::zeros(m + p);
        mean.rows_mut(0, m).copy_from(&self.m0);
        mean.rows_mut(m, p).copy_from(&(&self.h * &self.m0));
        let mut cov = DMatrix::zeros(m + p, m + p);
        cov.view_mut((0, 0), (m, m)).copy_from(&self.p0);
        cov.view_mut((m, 0), (p, m)).copy_from(&hp);
        cov.view_mut((0, m), (m, p)).copy_from(&hp.transpose());
        cov.view_mut((m, m), (p, p))
            .copy_from(&(&self.r + &hp * self.h.transpose()));
        Gaussian::from_parts(mean, cov)
    }
}

/// Markov chain on regimes `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpChain {
    initial: Vec<f64>,
    /// Row-stochastic: `trans[(i, j)] = p(r_k = j | r_{k-1} = i)`.
    trans: DMatrix<f64>,
}

impl JumpChain {
    pub fn new(initial: Vec<f64>, trans: DMatrix<f64>) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return Err(Error::InvalidChain("at least one regime is required".into()));
        }
        if trans.shape() != (k, k) {
            return Err(Error::InvalidChain(format!(
                "transition matrix is {}x{}, expected {k}x{k}",
                trans.nrows(),
                trans.ncols()
            )));
        }
        if initial.iter().any(|&p| !(p >= 0.0)) || trans.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidChain("probabilities must be non-negative".into()));
        }
        if (initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidChain("initial distribution does not sum to 1".into()));
        }
        for i in 0..k {
            let s: f64 = trans.row(i).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidChain(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { initial, trans })
    }

    /// `stay` on the diagonal, the remainder spread evenly; uniform start.
    pub fn symmetric(k: usize, stay: f64) -> Result<Self> {
        let off = if k > 1 { (1.0 - stay) / (k - 1) as f64 } else { 0.0 };
        let trans = DMatrix::from_fn(k, k, |i, j| if i == j { if k == 1 { 1.0 } else { stay } } else { off });
        Self::new(vec![1.0 / k as f64; k], trans)
    }

    pub fn single() -> Self {
        Self {
            initial: vec![1.0],
            trans: DMatrix::from_element(1, 1, 1.0),
        }
    }

    pub fn k(&self) -> usize {
        self.initial.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn trans(&self) -> &DMatrix<f64> {
        &self.trans
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.trans[(from, to)]
    }
}

/// Blocks of the pairwise transition
/// `z_k ~ N([[F1, F2], [H1, H2]] z_{k-1}; [[S11, S21^T], [S21, S22]])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmcBlocks {
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub s11: DMatrix<f64>,
    pub s21: DMatrix<f64>,
    pub s22: DMatrix<f64>,
}

impl PmcBlocks {
    pub fn state_dim(&self) -> usize {
        self.f1.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h2.nrows()
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let (m, p) = (self.f1.nrows(), self.h2.nrows());
        let checks: [(&'static str, &DMatrix<f64>, (usize, usize)); 7] = [
            ("block F1", &self.f1, (m, m)),
            ("block F2", &self.f2, (m, p)),
            ("block H1", &self.h1, (p, m)),
            ("block H2", &self.h2, (p, p)),
            ("block S11", &self.s11, (m, m)),
            ("block S21", &self.s21, (p, m)),
            ("block S22", &self.s22, (p, p)),
        ];
        for (context, mat, shape) in checks {
            if mat.shape() != shape {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: shape.0 * shape.1,
                    found: mat.len(),
                });
            }
        }
        Ok(())
    }

    /// `B = [[F1, F2], [H1, H2]]`.
    pub fn transition(&self) -> DMatrix<f64> {
        let (m, p) = (self.state_dim(), self.obs_dim());
        let mut b = DMatrix::zeros(m + p, m + p);
        b.view_mut((0, 0), (m, m)).copy_from(&self.f1);
        b.view_mut((0, m), (m, p)).copy_from(&self.f2);
        b.view_mut((m, 0), (p, m)).copy_from(&self.h1);
        b.view_mut((m, m), (p, p)).copy_from(&self.h2);
        b
    }

    /// `[F1; H1]`, the coefficient of `x_{k-1}` in the mean of `z_k`.
    pub fn state_columns(&self) -> DMatrix<f64> {
        let (m, p) = (self.state_dim(), self.obs_dim());
        let mut b = DMatrix::zeros(m + p, m);
        b.view_mut((0, 0), (m, m)).copy_from(&self.f1);
        b.view_mut((m, 0), (p, m)).copy_from(&self.h1);
        b
    }

    /// `[F2; H2]`, the coefficient of `y_{k-1}` in the mean of `z_k`.
    pub fn observation_columns(&self) -> DMatrix<f64> {
        let (m, p) = (self.state_dim(), self.obs_dim());
        let mut b = DMatrix::zeros(m + p, p);
        b.view_mut((0, 0), (m, p)).copy_from(&self.f2);
        b.view_mut((m, 0), (p, p)).copy_from(&self.h2);
        b
    }

    /// Assembled `Sigma = [[S11, S21^T], [S21, S22]]`.
    pub fn noise_cov(&self) -> DMatrix<f64> {
        let (m, p) = (self.state_dim(), self.obs_dim());
        let mut s = DMatrix::zeros(m + p, m + p);
        s.view_mut((0, 0), (m, m)).copy_from(&self.s11);
        s.view_mut((m, 0), (p, m)).copy_from(&self.s21);
        s.view_mut((0, m), (m, p)).copy_from(&self.s21.transpose());
        s.view_mut((m, m), (p, p)).copy_from(&self.s22);
        s
    }
}

/// How the `m x p` matrix `F2(r_{k-1}, r_k)` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum F2Policy {
    Zero,
    /// `K x K` table, indexed `[from][to]`.
    Explicit(Vec<Vec<DMatrix<f64>>>),
    /// Minimizes the divergence to the jump Markov state-space model.
    KldOptimal,
    /// `alpha * F(r_k)`; requires `m == p`.
    ScaledF(f64),
}

/// How the `p x p` matrix `H2(r_{k-1}, r_k)` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum H2Policy {
    Zero,
    Explicit(Vec<Vec<DMatrix<f64>>>),
    /// Solves `H(r_k) F(r_k) - H2 H(r_{k-1}) = 0`.
    SolveConstraint,
    /// `alpha * H(r_k)`; requires `m == p`.
    ScaledH(f64),
    /// `alpha` times the solution of the constraint.
    ScaledConstraint(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildPolicy {
    pub f2: F2Policy,
    pub h2: H2Policy,
}

impl BuildPolicy {
    /// The jump Markov state-space embedding (`F2 = H2 = 0`).
    pub fn jmss() -> Self {
        Self {
            f2: F2Policy::Zero,
            h2: H2Policy::Zero,
        }
    }

    /// Exactly filterable model closest to the jump Markov state-space model.
    pub fn exact_kld() -> Self {
        Self {
            f2: F2Policy::KldOptimal,
            h2: H2Policy::SolveConstraint,
        }
    }
}

/// Jump chain, per-regime physics and the `K x K` pairwise block table.
/// Parameters depend on the regimes only, never on the time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmcModel {
    chain: JumpChain,
    regimes: Vec<RegimeParams>,
    /// Row-major `K x K`: entry `from * K + to`.
    blocks: Vec<PmcBlocks>,
    policy: Option<BuildPolicy>,
}

impl ConditionalPmcModel {
    /// Assembles a model from explicit blocks, checking shapes only.
    /// Admissibility is reported by [`validate_model`].
    pub fn from_parts(
        chain: JumpChain,
        regimes: Vec<RegimeParams>,
        blocks: Vec<Vec<PmcBlocks>>,
        policy: Option<BuildPolicy>,
    ) -> Result<Self> {
        let k = chain.k();
        if regimes.len() != k {
            return Err(Error::InvalidModel(format!(
                "{} regimes for a {k}-state chain",
                regimes.len()
            )));
        }
        if blocks.len() != k || blocks.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidModel(format!("block table must be {k}x{k}")));
        }
        let m = regimes[0].state_dim();
        let p = regimes[0].obs_dim();
        if regimes.iter().any(|r| r.state_dim() != m || r.obs_dim() != p) {
            return Err(Error::InvalidModel("regimes disagree on state/observation dimension".into()));
        }
        let mut flat = Vec::with_capacity(k * k);
        for (i, row) in blocks.into_iter().enumerate() {
            for (j, b) in row.into_iter().enumerate() {
                b.check_shapes().map_err(|e| e.at_pair(i, j))?;
                if b.state_dim() != m || b.obs_dim() != p {
                    return Err(Error::InvalidModel(format!("block ({i}, {j}) has wrong dimensions")));
                }
                flat.push(PmcBlocks {
                    s11: linalg::symmetrize(&b.s11),
                    s22: linalg::symmetrize(&b.s22),
                    ..b
                });
            }
        }
        Ok(Self {
            chain,
            regimes,
            blocks: flat,
            policy,
        })
    }

    pub fn k(&self) -> usize {
        self.chain.k()
    }

    pub fn state_dim(&self) -> usize {
        self.regimes[0].state_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.regimes[0].obs_dim()
    }

    pub fn chain(&self) -> &JumpChain {
        &self.chain
    }

    pub fn regimes(&self) -> &[RegimeParams] {
        &self.regimes
    }

    pub fn regime(&self, r: usize) -> &RegimeParams {
        &self.regimes[r]
    }

    pub fn block(&self, from: usize, to: usize) -> &PmcBlocks {
        &self.blocks[from * self.k() + to]
    }

    pub fn policy(&self) -> Option<&BuildPolicy> {
        self.policy.as_ref()
    }

    pub fn time_invariant(&self) -> bool {
        true
    }

    /// Block table as nested rows.
    pub fn block_table(&self) -> Vec<Vec<PmcBlocks>> {
        let k = self.k();
        (0..k)
            .map(|i| (0..k).map(|j| self.block(i, j).clone()).collect())
            .collect()
    }

    /// Same model with a single block replaced, for mutation tests and
    /// hand-edited model files.
    pub fn with_block(mut self, from: usize, to: usize, block: PmcBlocks) -> Result<Self> {
        block.check_shapes()?;
        let k = self.k();
        self.blocks[from * k + to] = block;
        Ok(self)
    }

    /// Relabels regimes: new label `i` is old label `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidModel("relabeling must be a permutation".into()));
        }
        let initial = perm.iter().map(|&p| self.chain.initial[p]).collect();
        let trans = DMatrix::from_fn(k, k, |i, j| self.chain.trans[(perm[i], perm[j])]);
        let chain = JumpChain { initial, trans };
        let regimes = perm.iter().map(|&p| self.regimes[p].clone()).collect();
        let blocks = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| self.block(perm[i], perm[j]).clone())
            .collect();
        Ok(Self {
            chain,
            regimes,
            blocks,
            policy: None,
        })
    }
}
