use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is rank deficient (smallest singular value {sigma_min:.3e})")]
    RankDeficient { sigma_min: f64 },

    #[error("premise not certified: {quantity} has certified upper bound {upper:.6e}, needs < {threshold:.6e}")]
    PremiseNotCertified {
        quantity: String,
        upper: f64,
        threshold: f64,
    },

    #[error("near-inclusion threshold not met: gamma upper bound {gamma_upper:.6e} >= 1/digamma = {threshold:.6e}")]
    ThresholdNotMet { gamma_upper: f64, threshold: f64 },

    #[error("correction did not converge within {iterations} iterations (defect trajectory tail: {tail:?})")]
    ConvergenceFailure { iterations: usize, tail: Vec<f64> },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Walks stage wrappers down to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
