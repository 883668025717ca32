//! Small dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on Cholesky pivots used for admissibility checks.
pub const PD_TOL: f64 = 1e-10;

/// Relative tolerance on `|M - M^T|` accepted before symmetrizing.
pub const SYM_TOL: f64 = 1e-9;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    check_square(m, context)?;
    let asym = max_asymmetry(m);
    if asym > SYM_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric {
            context,
            asymmetry: asym,
        });
    }
    Ok(())
}

/// Squared Cholesky pivots `d_i` of the symmetrized matrix, stopping at the
/// first non-positive one.
pub fn cholesky_pivots(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let a = symmetrize(m);
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        pivots.push(d);
        if !(d > 0.0) {
            return pivots;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    pivots
}

/// Smallest Cholesky pivot, or the first non-positive one.
pub fn pd_margin(m: &DMatrix<f64>) -> f64 {
    cholesky_pivots(m)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Pivot threshold for `m` under the default scale-relative policy.
pub fn default_pd_threshold(m: &DMatrix<f64>) -> f64 {
    let scale = m.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    PD_TOL * scale
}

pub(crate) fn require_pd(m: &DMatrix<f64>, context: impl FnOnce() -> String) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let pivots = cholesky_pivots(m);
    let threshold = default_pd_threshold(m);
    let ok = pivots.len() == m.nrows() && pivots.iter().all(|&d| d > threshold && d.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { context: context() })
    }
}

/// Cholesky factor of a symmetric positive-definite matrix with its
/// log-determinant; all solves go through the triangular factor.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m, "cholesky")?;
        let chol = nalgebra::Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite {
            context: format!("cholesky factorization of {}x{} matrix failed", m.nrows(), m.ncols()),
        })?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite {
                context: "cholesky factor has a zero pivot".into(),
            });
        }
        Ok(Self { lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `r^T M^{-1} r`.
    pub fn mahalanobis(&self, r: &DVector<f64>) -> f64 {
        let w = self
            .lower
            .solve_lower_triangular(r)
            .expect("cholesky factor has a positive diagonal");
        w.norm_squared()
    }

    /// `log N(r; 0; M)`.
    pub fn log_density_centered(&self, r: &DVector<f64>) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + self.mahalanobis(r))
    }

    /// `M^{-1} B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.lower
            .transpose()
            .solve_upper_triangular(&w)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let w = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.lower
            .transpose()
            .solve_upper_triangular(&w)
            .expect("cholesky factor has a positive diagonal")
    }
}

/// Numerically stable `log(sum(exp(v)))`; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Right Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let scale = max_abs(m);
    let eps = f64::EPSILON * (r.max(c) as f64) * scale.max(f64::MIN_POSITIVE);
    m.clone()
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(c, r))
}

pub(crate) fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1.0)
}
