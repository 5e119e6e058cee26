use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("evaluation failed at node `{node}`: {reason}")]
    Evaluation { node: String, reason: String },

    #[error("evaluation failed at corner {corner}: {source}")]
    CornerEvaluation {
        corner: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("gaussian process fit failed: {0}")]
    Fit(String),

    #[error("vanguard failed: {0}")]
    Vanguard(String),

    #[error("policy update failed: {0}")]
    Update(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("results log error at line {line}: {reason}")]
    Log { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
