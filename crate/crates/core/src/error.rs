use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported cell layout: only L = 7 is implemented, got L = {0}")]
    UnsupportedLayout(usize),
    #[error("degenerate geometry: user ({cell}, {user}) coincides with the reference base station")]
    DegenerateGeometry { cell: usize, user: usize },
    #[error("correlation coefficient must lie in [0, 1), got {0}")]
    InvalidKappa(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown expression id `{0}`")]
    UnknownExpression(String),
    #[error("unknown probe quantity `{0}`")]
    UnknownQuantity(String),
    #[error("malformed channel dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
