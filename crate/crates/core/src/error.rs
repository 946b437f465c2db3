use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length-scale {index} must be strictly positive and finite, got {value}")]
    NonPositiveLengthScale { index: usize, value: f64 },

    #[error("degenerate design: matrix not factorizable with nugget up to {max_nugget:e}")]
    DegenerateDesign { max_nugget: f64 },

    #[error("point lies within the dedup radius of existing design point {existing}")]
    DuplicatePoint { existing: usize },

    #[error("design has {got} points, at least {needed} are required")]
    DesignTooSmall { needed: usize, got: usize },

    #[error(
        "budget {budget} too small for an initial design of {n0} points and batches of {batch}"
    )]
    BudgetTooSmall {
        n0: usize,
        budget: usize,
        batch: usize,
    },

    #[error("log density returned NaN at theta = {theta:?}")]
    NanLogDensity { theta: Vec<f64> },

    #[error("chain has no post-burn-in samples")]
    EmptyChain,

    #[error("sample set is degenerate: {0}")]
    DegenerateSamples(String),

    #[error("matrix is not symmetric positive semi-definite")]
    NotPositiveSemiDefinite,

    #[error("empty candidate grid")]
    EmptyGrid,

    #[error("simulator failure: {0}")]
    Simulator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
