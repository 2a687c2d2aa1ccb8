use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("radius {radius} is below the resolution limit {min}")]
    BelowResolution { radius: f64, min: f64 },

    #[error("no interior mass around node {0} at any radius")]
    NoInteriorMass(usize),

    #[error("solver stopped after {iterations} iterations with residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("node {0} is not covered by any ball")]
    UncoveredNode(usize),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
