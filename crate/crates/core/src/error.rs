use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum} (expected 1)")]
    RowSum { row: usize, sum: f64 },
    #[error("matrix is reducible (graph not strongly connected)")]
    Reducible,
    #[error("matrix is imprimitive (no positive power up to the Wielandt exponent)")]
    Imprimitive,
    #[error("invalid vertex set: {0}")]
    InvalidSet(String),
    #[error("vertex set {0:?} is not a vertex cut separating the observer")]
    NotACut(Vec<usize>),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no nonzero Markov parameter within {0} steps")]
    MarkovIndexExceeded(usize),
    #[error("block {block} cannot be made row-stochastic: diagonal entry of agent {agent} would be {value}")]
    NegativeBlockDiagonal { block: usize, agent: usize, value: f64 },
    #[error("pair is not controllable (reachable dimension {reachable} of {n})")]
    NotControllable { reachable: usize, n: usize },
    #[error("certified bounds do not separate at eps = {epsilon}; crossing at eps* = {crossing:?}")]
    CalibrationFailure {
        epsilon: f64,
        crossing: Option<f64>,
    },
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
