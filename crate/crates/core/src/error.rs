use thiserror::Error;

/// Errors produced by the flag-geometry library.
#[derive(Debug, Error)]
pub enum FlagError {
    /// An input violated a documented precondition (shape, finiteness,
    /// orthonormality, signature consistency, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The principal matrix logarithm is undefined: some rotation angle of the
    /// input lies within tolerance of pi. Callers treat the affected trial as
    /// failed and continue with other representatives.
    #[error("matrix logarithm near the cut locus: rotation angle within {0:e} of pi")]
    LogNearCutLocus(f64),

    /// Every representative/restart trial of the geodesic solver failed.
    #[error("no geodesic trial converged{0}")]
    NoConvergedTrial(String),

    /// The 2k-reduction hypothesis failed: the endpoint frames intersect.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// The requested reduction does not apply (2k >= n).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// The data matrix has numerical rank below the requested basis size.
    #[error("rank too low: {0}")]
    RankTooLow(String),

    /// Singular-value ties across a flag block boundary leave the flag
    /// ill defined.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    /// A file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An underlying numerical routine failed (e.g. Schur iteration).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlagError>;

impl FlagError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        FlagError::InvalidInput(msg.into())
    }
}
