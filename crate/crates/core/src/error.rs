use thiserror::Error;

/// Errors surfaced by the calibration and weighting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Requested more draws than the universe holds.
    #[error("cannot draw {requested} items from a universe of {available}")]
    SampleSize { requested: usize, available: usize },

    /// A sampling weight violated positivity where the law requires it.
    #[error("invalid weight {value} at ({row}, {col}): {reason}")]
    Weight {
        row: usize,
        col: usize,
        value: f64,
        reason: &'static str,
    },

    /// No column satisfies the group-size constraint.
    #[error("infeasible draw: {0}")]
    Infeasible(String),

    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested size exceeds what the instance can provide.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// An iterative numerical routine failed to converge or produced
    /// non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data violated a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration (unknown solver, bad parameter combination).
    #[error("config error: {0}")]
    Config(String),

    /// The conformalization-weight denominators degenerated (a test column
    /// without enough missing mass).
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),
}

pub type Result<T> = std::result::Result<T, Error>;
