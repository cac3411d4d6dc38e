use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid base measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid interaction matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state space of {states:e} configurations exceeds the enumeration limit {limit:e}")]
    StateSpaceTooLarge { states: f64, limit: f64 },

    #[error("non-finite value in {stage} at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// The innermost error behind stage and replicate wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Replicate { source, .. } | Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for numerical failures: non-finite iterates or non-convergence.
    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::NonFinite { .. } | Error::NotConverged(_))
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
