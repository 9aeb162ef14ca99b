use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate event time {time}")]
    DuplicateTime { time: f64 },

    #[error("event time {time} outside (0, {horizon}]")]
    OutOfRange { time: f64, horizon: f64 },

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polynomial degree {degree} exceeds maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error("intensity negative at t = {t}: {value}")]
    NegativeIntensity { t: f64, value: f64 },

    #[error("horizon mismatch: path has T = {path}, parameters validated for T = {params}")]
    HorizonMismatch { path: f64, params: f64 },

    #[error("no events after adaptation")]
    NoEventsAfterAdaptation,

    #[error("grid step too coarse: gamma(t)*h = {value} >= 1 at t = {t}")]
    StepTooCoarse { t: f64, value: f64 },

    #[error("two events fall in grid cell {cell}; refine the grid")]
    GridCollision { cell: usize },

    #[error("inverse of cumulative intensity did not converge for u = {mass}")]
    NoConvergence { mass: f64 },

    #[error("empty chain")]
    EmptyChain,

    #[error("element {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}
