use std::path::PathBuf;

use thiserror::Error;

use crate::continuation::ContinuationTrace;

pub type Result<T, E = MfgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid functions live on different grids ({left} vs {right} nodes)")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("density is not positive at node {index} (m = {value:e})")]
    NonpositiveDensity { index: usize, value: f64 },

    #[error("potential mode {modes} is not below Nyquist for n = {n}")]
    NyquistViolation { modes: usize, n: usize },

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Hamiltonian assumption audit failed with {count} violation(s)")]
    AssumptionViolated { count: usize },

    #[error("singular matrix: pivot {pivot:e} at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    #[error("linear dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("positivity of m lost: step scale fell below {min_step_scale:e}")]
    PositivityLost { min_step_scale: f64 },

    #[error("line search failed to reduce the residual below {residual:e}")]
    LineSearchFailed { residual: f64 },

    #[error("linear solve failed inside Newton: {0}")]
    LinearSolveFailed(Box<MfgError>),

    #[error("seed bracket failure: g(0) = {g0} is not negative")]
    BracketFailure { g0: f64 },

    #[error("seed bisection stalled with |g| = {residual:e}")]
    BisectionStall { residual: f64 },

    #[error("seed requires lambda = 0, got {lambda}")]
    SeedRequiresZeroLambda { lambda: f64 },

    #[error("continuation stalled at lambda = {}", .0.reached_lambda)]
    ContinuationStalled(Box<ContinuationTrace>),

    #[error("{failed} of {total} sweep members failed")]
    SweepFailed { failed: usize, total: usize },

    #[error("density minimum {m_min:e} is below its lower-bound certificate {certificate:e}")]
    CertificateViolated { m_min: f64, certificate: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("non-finite number in output field `{0}`")]
    NonFiniteOutput(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed solution file {path}: {message}")]
    MalformedSolution { path: PathBuf, message: String },
}

impl MfgError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MfgError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for configuration problems (exit code 1 in the CLI).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            MfgError::Parse { .. }
                | MfgError::Validation { .. }
                | MfgError::UnknownKey(_)
                | MfgError::InvalidParameter { .. }
                | MfgError::InvalidRange(_)
                | MfgError::InvalidGrid(_)
                | MfgError::NyquistViolation { .. }
                | MfgError::AssumptionViolated { .. }
        )
    }

    /// True for file-system and solution-file problems (exit code 3 in the CLI).
    pub fn is_io_error(&self) -> bool {
        matches!(
            self,
            MfgError::Io { .. } | MfgError::MalformedSolution { .. }
        )
    }
}
