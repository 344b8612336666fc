use thiserror::Error;

/// Errors raised by the sampler core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("symmetric eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("intercept requested but the cache carries no intercept block")]
    MissingInterceptBlock,

    #[error("integration grid exceeded {max_grid} points before meeting the tolerances")]
    GridOverflow { max_grid: usize },

    #[error("log density returned a non-finite value ({value}) at psi = {psi}")]
    NonFiniteDensity { psi: f64, value: f64 },

    #[error("degenerate conditional: {0}")]
    DegenerateConditional(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("zero variance: statistic is undefined for constant input")]
    ZeroVariance,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Strips iteration annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }
}
