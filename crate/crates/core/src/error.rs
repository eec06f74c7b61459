use thiserror::Error;

/// Errors produced by the simulator and the analysis layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented domain (non-positive dimension,
    /// invalid distribution shape, contribution above cap, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation that needs data was handed an empty dataset.
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    /// Model/dataset dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Ranking rejects non-finite validation scores.
    #[error("non-finite score for client {client}")]
    NonFiniteScore { client: usize },

    /// Two collections keyed by client id do not cover the same clients.
    #[error("client id mismatch: {0}")]
    ClientMismatch(String),

    /// The performance curve is flat (p' = 0) at the requested evaluation
    /// point, so the sufficiency condition is undefined there.
    #[error("degenerate saturation: p'({at}) = 0")]
    DegenerateSaturation { at: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
