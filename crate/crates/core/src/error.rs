use thiserror::Error;

/// Errors surfaced by triangle construction, model evaluation, and inference.
#[derive(Debug, Error)]
pub enum NowcastError {
    #[error("no records supplied")]
    EmptyRecords,
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("record {index}: unknown region `{region}`")]
    UnknownRegion { index: usize, region: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("model specification and parameter state disagree: {0}")]
    SpecMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("log posterior is not finite at initialization (block `{block}`)")]
    NonFiniteInitialization { block: String },
    #[error("non-finite deviance in draw {draw}")]
    NonFiniteDeviance { draw: usize },
    #[error("log-mean {value:.2} exceeds 30 at cell (t={t}, d={d}, s={s}); rescale the scenario")]
    MeanOverflow {
        t: usize,
        d: usize,
        s: usize,
        value: f64,
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

pub type Result<T> = std::result::Result<T, NowcastError>;
