//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("axis excluded: r_min must be positive, got {0}")]
    AxisExcluded(f64),

    #[error("region does not intersect the grid")]
    EmptyRegion,

    #[error("point (r={r}, z={z}) lies outside the grid")]
    PointOutsideGrid { r: f64, z: f64 },

    #[error(
        "elliptic solve failed: residual {residual:.3e} exceeds tolerance {tolerance:.3e} \
         after {iterations} iteration(s)"
    )]
    EllipticFailure {
        residual: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("non-finite value detected in field `{field}` at t = {t}")]
    BlowUp { field: String, t: f64 },

    #[error(
        "insufficient retention for {monitor}: needs look-back {needed}, \
         trajectory covers {available}"
    )]
    InsufficientRetention {
        monitor: String,
        needed: f64,
        available: f64,
    },

    #[error("rescale factor {0} is not a power of two; nested-grid rescaling requires one")]
    NonNestedScale(f64),

    #[error("unknown manufactured family `{0}`")]
    UnknownFamily(String),

    #[error("config: {0}")]
    Config(String),

    #[error("monitor spec: {0}")]
    MonitorSpec(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
