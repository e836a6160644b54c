use thiserror::Error;

/// Library-wide error type.
///
/// Variants are grouped by where they surface operationally: configuration
/// problems, data/ingestion problems, and numerical failures. The CLI maps
/// these onto its exit codes (2/3/4) in that order.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix shapes do not line up.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A matrix required to be symmetric positive definite is not; the pivot
    /// index (0-based) is where the factorization first failed.
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    /// Rejection sampling of a truncated law gave up: the truncation region
    /// carries (numerically) vanishing mass.
    #[error("truncation region mass too small: no acceptance in {attempts} draws")]
    VanishingTruncationMass { attempts: u64 },

    /// A log-density evaluated to NaN/inf where a finite value is required.
    #[error("non-finite density at time index {t}")]
    NonFiniteDensity { t: usize },

    /// Chain initialization could not locate a finite-posterior state.
    #[error("no finite-posterior starting point found after {attempts} attempts")]
    NoFiniteStart { attempts: u32 },

    /// A numerical routine failed to converge.
    #[error("failed to converge: {0}")]
    NoConvergence(String),

    /// Invalid run configuration (schema, ranges, inconsistent blocks).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            _ => 4,
        }
    }

    /// Coarse machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) | Error::Io(_) => "data",
            _ => "numeric",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
