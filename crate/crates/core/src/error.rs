use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0} outside [0,1)")]
    Domain(f64),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("no vertical adjustment possible: v2 = {0}")]
    NoAdjustment(f64),
    #[error("degenerate rotation: {0}")]
    DegenerateRotation(String),
    #[error("tower level {level} is split by a discontinuity")]
    LevelSplit { level: u128 },
    #[error("tower level {level} overlaps an earlier level")]
    Overlap { level: u128 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("search failure: {0}")]
    SearchFailure(String),
    #[error("geometry too coarse: p_hat = {0}")]
    TooCoarse(i128),
}

pub type Result<T> = std::result::Result<T, Error>;
