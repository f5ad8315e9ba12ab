use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("element {element} is inverted (J = {jacobian:e})")]
    InvertedElement { element: usize, jacobian: f64 },

    #[error("configuration error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("voxel grid too coarse: {0}")]
    GridResolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("line search failed after {backtracks} backtracks at iteration {iteration} (|g| = {grad_norm:e})")]
    LineSearch {
        iteration: usize,
        backtracks: usize,
        grad_norm: f64,
    },

    #[error("scenario infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration error at the given JSON pointer.
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
