use thiserror::Error;

/// Errors raised across the simulator, distributions and learner.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Distribution parameters violate the family's invariants.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An object was used before it was ready (e.g. an unfitted map).
    #[error("state error: {0}")]
    State(String),

    /// Dimensions of two collaborating objects disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The physics produced a non-finite value.
    #[error("simulation fault: {reason}\n{dump}")]
    SimulationFault { reason: String, dump: String },

    /// A numeric routine produced NaN or infinity where a finite value was required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
