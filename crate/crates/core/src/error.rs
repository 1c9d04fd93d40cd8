use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("eigenvalue {index} is zero; the gain matrix must be non-singular")]
    ZeroEigenvalue { index: usize },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {deviation:e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular: smallest |eigenvalue| ratio {ratio:e}")]
    Singular { ratio: f64 },

    #[error("weight {index} is not strictly positive and finite: {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("state entry {index} is not finite")]
    NonFiniteState { index: usize },

    #[error("direction is not a unit vector: norm {norm}")]
    NotUnit { norm: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("angle {theta} outside [0, pi)")]
    ThetaOutOfRange { theta: f64 },

    #[error("projected block has zero norm")]
    DegenerateProjection,

    #[error("invalid target fractions: {reason}")]
    InvalidTargets { reason: String },

    #[error("fixed-point iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("spectrum is not in case 1a: target fraction v[{index}] = {value} <= 0")]
    NotCase1a { index: usize, value: f64 },

    #[error("spectrum is not in case 2 (needs both stable and unstable eigenvalues)")]
    NotCase2,

    #[error("spectrum is not stabilizable: r = {r}")]
    NotStabilizable { r: f64 },

    #[error("invalid range: {reason}")]
    InvalidRange { reason: String },

    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
