use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("point ({z1}, {z2}) lies below the rough boundary")]
    OutsideDomain { z1: f64, z2: f64 },
    #[error("need {needed} wall derivatives, got {got}")]
    Arity { needed: usize, got: usize },
    #[error("incompatible data: mismatch {mismatch:e}")]
    Compatibility { mismatch: f64 },
    #[error("data does not decay: tail magnitude {tail:e}")]
    Decay { tail: f64 },
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("time step {dt:e} exceeds CFL limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("precondition violated: {0}")]
    Contract(String),
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
