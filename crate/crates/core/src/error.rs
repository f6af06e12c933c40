use thiserror::Error;

/// Errors produced by the kernel pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable `{0}` has no observed cells")]
    NoObservations(String),

    #[error("every variable exceeds the missing-rate threshold {0}")]
    AllVariablesDropped(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("singular mean update for component {component}, variable {variable}")]
    Singular { component: usize, variable: usize },

    #[error("all component likelihoods underflow for record {0}")]
    Underflow(usize),

    #[error("requested embedding dimension {requested} exceeds numerical rank {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("target correlation {target} is infeasible; maximum achievable is {max:.4}")]
    Infeasible { target: f64, max: f64 },

    #[error("all {0} base models failed to train")]
    AllModelsFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::Underflow(_)
                | Error::RankDeficient { .. }
                | Error::AllModelsFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
