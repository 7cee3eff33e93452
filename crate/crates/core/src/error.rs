use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("grid is not rectangular: row {row} has {found} entries, expected {expected}")]
    RaggedGrid {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("value {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("no row/column permutation makes the probability matrix monotone")]
    NotMonotonizable,
    #[error("probability matrix carries no monotonicity certificate")]
    NotMonotone,
    #[error("every selection objective is zero for target ({row}, {col})")]
    AllZero { row: usize, col: usize },
    #[error("invalid rank {rank} for a {rows}x{cols} matrix")]
    InvalidRank { rank: usize, rows: usize, cols: usize },
    #[error("matrix is numerically rank deficient: sigma_r / sigma_1 = {ratio:e}")]
    RankDeficient { ratio: f64 },
    #[error("observed entry ({row}, {col}) has zero sampling probability")]
    DivisionByZeroProbability { row: usize, col: usize },
    #[error("rank {rank} exceeds the selected submatrix size k* = {k_star}")]
    RankExceedsSubmatrix { rank: usize, k_star: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
