use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("log outside injectivity radius (rotation angle {angle:.6} >= pi)")]
    OutOfDomain { angle: f64 },
    #[error("rank deficient frame (rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("gauge history not reconstructible at step {0}")]
    Unreconstructible(usize),
    #[error("too few paths: {got} < {need}")]
    TooFewPaths { got: usize, need: usize },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
