use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("site {site} out of range for a chain of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("gate sites {0} and {1} are not adjacent")]
    NonAdjacent(usize, usize),

    #[error("dense Hamiltonian of dimension {dim} needs {bytes} bytes, above the cap of {cap} bytes")]
    DimensionCap { dim: usize, bytes: usize, cap: usize },

    #[error("coupling is zero: emitter lifetime is infinite")]
    InfiniteLifetime,

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("projected norm collapsed to {norm:.3e}; restart from a different initial state")]
    NormCollapse { norm: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error("shape error: {0}")]
    Shape(#[from] ndarray::ShapeError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { field: field.to_string(), reason: reason.into() }
}
