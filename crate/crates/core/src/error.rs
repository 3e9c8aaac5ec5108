use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{what} = {value} lies outside {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("Gram matrix is degenerate: min eigenvalue {min_eigenvalue:e}, max eigenvalue {max_eigenvalue:e}")]
    DegenerateGram { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("CFL condition violated at step {step}: dt = {dt:e} exceeds {limit:e}")]
    CflViolation { step: usize, dt: f64, limit: f64 },

    #[error("non-finite value in {field} at step {step}")]
    NonFiniteField { field: &'static str, step: usize },

    #[error("density dropped to {min_rho} (floor {floor}) at step {step}")]
    VacuumApproach { step: usize, min_rho: f64, floor: f64 },

    #[error("control amplitude too large: {0}")]
    AmplitudeTooLarge(String),

    #[error("shooting did not converge: {0}")]
    Diverged(String),

    #[error("position {x} lies outside [0, pi]")]
    OutOfDomain { x: f64 },

    #[error("determinant of size {d} exceeds the limit {limit}")]
    SizeLimit { d: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed snapshot file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Field-history failures that mean the forcing left the small-data regime.
    pub(crate) fn is_regime_exit(&self) -> bool {
        matches!(
            self,
            Error::VacuumApproach { .. } | Error::NonFiniteField { .. } | Error::CflViolation { .. }
        )
    }
}
