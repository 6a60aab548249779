use thiserror::Error;

/// Errors produced by construction and computation routines.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("empty distribution")]
    Empty,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("mass entries must be finite and nonnegative, found {value}")]
    InvalidMass { value: f64 },

    #[error("masses sum to {sum}, expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("axis {axis} out of bounds for a table with {axes} axes")]
    AxisOutOfBounds { axis: usize, axes: usize },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("conditioning row {row} has zero mass and is undefined")]
    UndefinedRow { row: usize },

    #[error("distortion entries must be finite and nonnegative, found {value}")]
    InvalidDistortion { value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} needs {required} units of work, budget is {budget}")]
    TooLarge {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    #[error("no feasible channel: {0}")]
    Infeasible(String),

    #[error("all encoder weights vanished for the presented block")]
    EncodingFailure,

    #[error("every simulation trial failed to encode")]
    AllTrialsFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
