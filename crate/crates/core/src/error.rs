use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not symmetric in {context} (max asymmetry {asymmetry:e})")]
    NotSymmetric {
        context: &'static str,
        asymmetry: f64,
    },

    #[error("matrix is not positive definite: {context}")]
    NotPositiveDefinite { context: String },

    /// `H_cur F_cur - H2 H_prev = 0` has no exact solution.
    #[error("no H2 satisfies the observation constraint (relative residual {residual:e} > {tol:e})")]
    NoSolution { residual: f64, tol: f64 },

    /// A block for regime pair `(from, to)` does not zero the state-to-observation
    /// coupling, so the exact recursion does not apply.
    #[error("regime pair ({from}, {to}) violates the observation constraint: |H1| = {residual:e}")]
    ConstraintViolated { from: usize, to: usize, residual: f64 },

    #[error("regime pair ({from}, {to}): {source}")]
    RegimePair {
        from: usize,
        to: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("initial observation has zero likelihood under every regime")]
    DegenerateInitialization,

    #[error("all regime hypotheses have zero likelihood at step {step}")]
    DegenerateLikelihood { step: usize },

    #[error("enumeration needs {required} sequences, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("invalid jump chain: {0}")]
    InvalidChain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_pair(self, from: usize, to: usize) -> Self {
        Error::RegimePair {
            from,
            to,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_run(self, run: usize) -> Self {
        Error::Run {
            run,
            source: Box::new(self),
        }
    }
}
