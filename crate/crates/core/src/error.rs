use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("group {group} is rank deficient (smallest gram eigenvalue {min_eigenvalue:e} <= {threshold:e})")]
    RankDeficientGroup {
        group: usize,
        min_eigenvalue: f64,
        threshold: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ill-posed least squares on active set: {0}")]
    IllPosedActiveSet(String),

    #[error("brute-force enumeration of {subsets} subsets exceeds the limit of {limit}")]
    CombinatorialBlowup { subsets: u128, limit: u128 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
