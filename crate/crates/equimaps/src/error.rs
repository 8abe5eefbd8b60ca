use thiserror::Error;

use crate::group::Group;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group mismatch: expected {expected:?}, found {found:?}")]
    GroupMismatch { expected: Group, found: Group },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("quadrature with {nodes} nodes cannot resolve frequencies up to {l_max} (need at least {required})")]
    QuadratureTooCoarse { nodes: usize, l_max: usize, required: usize },

    #[error("point {index} is a fixed point of the action (orbit radius {radius:e} <= {tol:e})")]
    FixedPoint { index: usize, radius: f64, tol: f64 },

    #[error("non-positive degree {value:e} at index {index}")]
    NonPositiveDegree { index: usize, value: f64 },

    #[error("block for frequency {freq} is not Hermitian (deviation {deviation:e})")]
    NotHermitian { freq: usize, deviation: f64 },

    #[error("eigenvalue {value:e} at frequency {freq} lies outside [0, 1] beyond the clipping window")]
    EigenvalueOutOfRange { freq: usize, value: f64 },

    #[error("eigensolver failed for frequency {freq}")]
    Eigensolver { freq: usize },

    #[error("no eigenvalue passes the truncation threshold {delta:e}; largest available lambda^t is {largest:e}")]
    EmptyRetainedSet { delta: f64, largest: f64 },

    #[error("embedding labels do not match")]
    LabelMismatch,

    #[error("dense oracle size N*M = {size} exceeds the guard {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("config field `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument { name, reason: reason.into() }
}
