use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: a Fock space needs at least two levels")]
    InvalidDimension { dim: usize },

    #[error("level index {index} out of range for a {dim}-level space")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("truncation leakage: weight {weight:.3e} beyond the retained levels exceeds {threshold:.0e}")]
    TruncationLeakage { weight: f64, threshold: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("integration diverged at t = {t}: |Tr rho - 1| = {trace_error:.3e}")]
    IntegrationDiverged { t: f64, trace_error: f64 },

    #[error("no convergence by t = {t_max}: residual {residual:.3e}")]
    NoConvergence { t_max: f64, residual: f64 },

    #[error("degenerate norm {norm:.3e} after stochastic step")]
    DegenerateNorm { norm: f64 },

    #[error("at t = {t}: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: Box<Error> },

    #[error("insufficient samples: {found} post burn-in samples per trajectory, need {required}")]
    InsufficientSamples { found: usize, required: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at(self, t: f64) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }

    /// Strips `AtTime` / `Trajectory` context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } | Error::Trajectory { source, .. } => source.root(),
            e => e,
        }
    }
}
