use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantizer parameters: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("packed length {0} is not a triangular number d(d+1)/2 for the stated dimension")]
    PackedLength(usize),

    /// A quantizer was called with ‖x − x_ref‖ > y, or a convergence
    /// inequality the algorithm relies on failed.
    #[error("invariant violated: {check} (bound {bound:.6e}, observed {observed:.6e})")]
    InvariantViolation { check: String, bound: f64, observed: f64 },

    #[error("data matrix is rank deficient (full column rank required): {0}")]
    RankDeficient(String),

    #[error(
        "Newton initialization outside the local convergence ball: max distance {distance:.6e} > radius {radius:.6e}"
    )]
    BallCondition { distance: f64, radius: f64 },

    #[error("refused: {0}")]
    Refused(String),

    #[error("iteration diverged at round {round}: error {error:.6e}")]
    Diverged { round: usize, error: f64 },

    #[error("network: {0}")]
    Network(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Error::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn violation(check: impl Into<String>, bound: f64, observed: f64) -> Self {
        Error::InvariantViolation {
            check: check.into(),
            bound,
            observed,
        }
    }

    /// Errors signalling that an algorithmic guarantee failed at runtime.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(
            self,
            Error::InvariantViolation { .. } | Error::BallCondition { .. } | Error::Diverged { .. }
        )
    }

    /// Errors caused by malformed user input (files, flags, config).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Config(_)
                | Error::Io(_)
                | Error::File { .. }
                | Error::RankDeficient(_)
                | Error::InvalidSpec(_)
                | Error::DimensionMismatch { .. }
                | Error::PackedLength(_)
                | Error::Refused(_)
        )
    }
}
