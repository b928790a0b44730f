use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment undefined: {0}")]
    MomentUndefined(String),

    #[error("mixture needs at least one component")]
    EmptyMixture,

    #[error("jump probability per step {0} exceeds 1; refine the time grid")]
    GridTooCoarse(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("log-scheme argument 1 + pi*J <= 0 on {paths} path(s)")]
    LogArgumentNonpositive { paths: usize },

    #[error("direct scheme produced a non-positive value on {paths} path(s)")]
    NonpositiveValue { paths: usize },

    #[error("wealth is zero or negative ({0}); portfolio fraction undefined")]
    DivisionByZeroWealth(f64),

    #[error("series truncation at {j_max} terms leaves tail bound {bound:e}")]
    TruncationNotConverged { j_max: usize, bound: f64 },

    #[error("model has zero Brownian volatility")]
    ZeroVolatility,

    #[error(
        "minimal-variance measure unavailable for this jump law: 1 + G(e^Y - 1) > 0 fails \
         with probability {violation:e} per jump (G = {g})"
    )]
    MeasureUnavailable { g: f64, violation: f64 },

    #[error("unsupported model for this route: {0}")]
    UnsupportedModel(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
