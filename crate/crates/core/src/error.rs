use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("batch must hold at least 2 points, got {0}")]
    BatchTooSmall(usize),

    #[error("batch has {rows} rows but {ids} ids")]
    BatchIdCount { rows: usize, ids: usize },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("requested {requested} components but only {available} are available ({} missing)", requested - available)]
    InsufficientComponents { requested: usize, available: usize },

    #[error("model has not absorbed any data")]
    EmptyModel,

    #[error("forgetting factor {0} is outside (0, 1]")]
    InvalidForgetting(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} stored points, have {have}")]
    NotEnoughPoints { needed: usize, have: usize },

    #[error("unknown point id `{0}`")]
    UnknownPoint(String),

    #[error("event for `{id}` rejected: {reason}")]
    Rejected { id: String, reason: String },

    #[error("malformed stream record: {0}")]
    Malformed(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}
