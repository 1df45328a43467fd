use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid quantile level {0}: must lie strictly between 0 and 1")]
    InvalidLevel(f64),

    #[error("invalid delta {0}: must lie strictly between 0 and 1")]
    InvalidDelta(f64),

    #[error("bound violated: loss {value} exceeds bound {bound}")]
    BoundViolated { value: f64, bound: f64 },

    #[error("non-finite value {value} at sample {row}, grid point {col}")]
    NonFiniteLoss { row: usize, col: usize, value: f64 },

    #[error("value is NaN or otherwise not comparable")]
    Incomparable,

    #[error(
        "no feasible λ: loss level α={alpha} unreachable at confidence 1−δ={confidence} \
         (the grid contains no point whose loss quantile is ≤ α)"
    )]
    Infeasible { alpha: f64, confidence: f64 },

    #[error(
        "no feasible λ for joint control of {m} losses; individually infeasible loss indices: {culprits:?}"
    )]
    InfeasibleMulti { m: usize, culprits: Vec<usize> },

    #[error(
        "inputs violate CLCP nesting assumptions: sample {row} loss increases between grid points {col} and {next}"
    )]
    NestingViolated { row: usize, col: usize, next: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("search function `{0}` returned a point outside its input set")]
    SearchOutsideSet(String),

    #[error("loss {loss} is not decomposable: it varies with coordinates other than its own")]
    NotDecomposable { loss: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
