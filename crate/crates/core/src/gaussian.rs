//! Dense Gaussian primitives: densities, affine marginalization, block
//! conditioning and the closed-form Kullback-Leibler divergence.
//!
//! Every covariance is stored symmetrized. Inverses never appear explicitly;
//! solves go through a Cholesky factor ([`SpdFactor`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};

/// Multivariate normal law `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    /// Validated constructor: `cov` must be square, symmetric within
    /// [`linalg::SYM_TOL`] and positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&cov, "gaussian covariance")?;
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                context: "gaussian mean/covariance",
                expected: cov.nrows(),
                found: mean.len(),
            });
        }
        linalg::require_pd(&cov, || "gaussian covariance".into())?;
        Ok(Self::from_parts(mean, cov))
    }

    /// Builds without the positive-definiteness check; the covariance is
    /// still symmetrized. For hot loops whose inputs are already validated.
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let cov = linalg::symmetrize(&cov);
        Self { mean, cov }
    }

    pub fn standard(n: usize) -> Self {
        Self::from_parts(DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `E[x x^T] = cov + mean mean^T`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.cov + &self.mean * self.mean.transpose()
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }
}

/// Joint Gaussian of `(zeta, eta)` in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussianBlocks {
    pub mean_zeta: DVector<f64>,
    pub mean_eta: DVector<f64>,
    pub cov_zeta: DMatrix<f64>,
    pub cov_eta: DMatrix<f64>,
    /// `Cov(zeta, eta)`, `p x q`.
    pub cross_cov: DMatrix<f64>,
}

impl JointGaussianBlocks {
    pub fn new(
        mean_zeta: DVector<f64>,
        mean_eta: DVector<f64>,
        cov_zeta: DMatrix<f64>,
        cov_eta: DMatrix<f64>,
        cross_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, q) = (mean_zeta.len(), mean_eta.len());
        if cov_zeta.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                context: "joint zeta covariance",
                expected: p,
                found: cov_zeta.nrows(),
            });
        }
        if cov_eta.shape() != (q, q) {
            return Err(Error::DimensionMismatch {
                context: "joint eta covariance",
                expected: q,
                found: cov_eta.nrows(),
            });
        }
        if cross_cov.shape() != (p, q) {
            return Err(Error::DimensionMismatch {
                context: "joint cross covariance",
                expected: p * q,
                found: cross_cov.len(),
            });
        }
        let joint = Self {
            mean_zeta,
            mean_eta,
            cov_zeta: linalg::symmetrize(&cov_zeta),
            cov_eta: linalg::symmetrize(&cov_eta),
            cross_cov,
        };
        linalg::require_pd(&joint.assemble().1, || "joint gaussian covariance".into())?;
        Ok(joint)
    }

    /// Splits a joint law on `(zeta, eta)` whose first `p` coordinates are `zeta`.
    pub fn split(g: &Gaussian, p: usize) -> Result<Self> {
        let n = g.dim();
        if p > n {
            return Err(Error::DimensionMismatch {
                context: "joint split",
                expected: n,
                found: p,
            });
        }
        let q = n - p;
        Ok(Self {
            mean_zeta: g.mean.rows(0, p).into_owned(),
            mean_eta: g.mean.rows(p, q).into_owned(),
            cov_zeta: g.cov.view((0, 0), (p, p)).into_owned(),
            cov_eta: g.cov.view((p, p), (q, q)).into_owned(),
            cross_cov: g.cov.view((0, p), (p, q)).into_owned(),
        })
    }

    /// Full `(p+q)` mean and covariance.
    pub fn assemble(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (p, q) = (self.mean_zeta.len(), self.mean_eta.len());
        let mut mean = DVector::zeros(p + q);
        mean.rows_mut(0, p).copy_from(&self.mean_zeta);
        mean.rows_mut(p, q).copy_from(&self.mean_eta);
        let mut cov = DMatrix::zeros(p + q, p + q);
        cov.view_mut((0, 0), (p, p)).copy_from(&self.cov_zeta);
        cov.view_mut((p, p), (q, q)).copy_from(&self.cov_eta);
        cov.view_mut((0, p), (p, q)).copy_from(&self.cross_cov);
        cov.view_mut((p, 0), (q, p)).copy_from(&self.cross_cov.transpose());
        (mean, cov)
    }

    pub fn marginal_eta(&self) -> Gaussian {
        Gaussian::from_parts(self.mean_eta.clone(), self.cov_eta.clone())
    }
}

/// `log N(x; g.mean; g.cov)`.
pub fn log_density(g: &Gaussian, x: &DVector<f64>) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            context: "log_density point",
            expected: g.dim(),
            found: x.len(),
        });
    }
    let factor = SpdFactor::new(&g.cov)?;
    Ok(factor.log_density_centered(&(x - &g.mean)))
}

/// Law of `zeta = F eta + d + w`, `w ~ N(0, Q)`, `eta ~ prior`:
/// `N(F m + d, Q + F P F^T)`.
pub fn affine_marginal(
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    q: &DMatrix<f64>,
    prior: &Gaussian,
) -> Result<Gaussian> {
    let p = q.nrows();
    if f.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "affine_marginal F columns",
            expected: prior.dim(),
            found: f.ncols(),
        });
    }
    if f.nrows() != p || d.len() != p || q.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "affine_marginal output",
            expected: p,
            found: f.nrows(),
        });
    }
    let mean = f * &prior.mean + d;
    let cov = q + f * &prior.cov * f.transpose();
    linalg::require_pd(&cov, || "affine_marginal covariance".into())?;
    Ok(Gaussian::from_parts(mean, cov))
}

/// Law of `zeta` given `eta = eta_value`, via the Schur complement.
pub fn condition(joint: &JointGaussianBlocks, eta_value: &DVector<f64>) -> Result<Gaussian> {
    if eta_value.len() != joint.mean_eta.len() {
        return Err(Error::DimensionMismatch {
            context: "condition value",
            expected: joint.mean_eta.len(),
            found: eta_value.len(),
        });
    }
    let factor = SpdFactor::new(&joint.cov_eta)?;
    // gain = P^{zeta,eta} (P^eta)^{-1}, obtained as ((P^eta)^{-1} (P^{zeta,eta})^T)^T
    let gain = factor.solve(&joint.cross_cov.transpose()).transpose();
    let mean = &joint.mean_zeta + &gain * (eta_value - &joint.mean_eta);
    let cov = &joint.cov_zeta - &gain * joint.cross_cov.transpose();
    Ok(Gaussian::from_parts(mean, cov))
}

/// True iff the symmetrized `m` admits a Cholesky factorization whose squared
/// pivots all exceed `tol`. Panics on a non-square input.
pub fn is_positive_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    assert_eq!(m.nrows(), m.ncols(), "is_positive_definite needs a square matrix");
    let pivots = linalg::cholesky_pivots(m);
    pivots.len() == m.nrows() && pivots.iter().all(|&d| d > tol)
}

/// `D_KL(p || q)` between two Gaussians of equal dimension.
pub fn kld_gaussian(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "kld_gaussian",
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let fq = SpdFactor::new(&q.cov)?;
    let fp = SpdFactor::new(&p.cov)?;
    let trace = fq.solve(&p.cov).trace();
    let maha = fq.mahalanobis(&(&q.mean - &p.mean));
    let n = p.dim() as f64;
    Ok(0.5 * (trace + maha - n + fq.log_det() - fp.log_det()))
}
