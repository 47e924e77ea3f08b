//! Error taxonomy shared by every module in the crate.
//!
//! Validation failures (shapes, stochasticity, weight ranges) are separated
//! from numerical failures (non-convergence, divergence) so callers can map
//! them to different exit paths: the former are caller mistakes, the latter
//! are properties of the supplied model.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("operands live on different state spaces ({context})")]
    SpaceMismatch { context: &'static str },

    #[error("kernel row {row} sums to {sum:.17e}, too far from 1 to renormalize")]
    KernelRowSum { row: usize, sum: f64 },

    #[error("kernel entry ({row},{col}) = {value:.17e} lies outside [0,1]")]
    KernelEntryRange { row: usize, col: usize, value: f64 },

    #[error("weight function must satisfy V >= 1 everywhere; V[{index}] = {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("measure entry {index} = {value:.17e} is negative")]
    MeasureNegativeEntry { index: usize, value: f64 },

    #[error("measure sums to {sum:.17e}, not 1")]
    MeasureNotNormalized { sum: f64 },

    #[error("no unique invariant distribution found: {detail}")]
    Ergodicity { detail: String },

    #[error("sample path left the finite range at t = {time}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("domain error: {detail}")]
    Domain { detail: String },

    #[error("invalid configuration: {detail}")]
    Configuration { detail: String },

    #[error("spectral oracle failed: {detail}")]
    OracleFailure { detail: String },

    #[error(
        "fixed-point iteration stalled after {iterations} sweeps: span residual {residual:.3e}, \
         estimated contraction factor {contraction:.6}"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        contraction: f64,
    },

    #[error("declared reward bound violated: {detail}")]
    BoundViolation { detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

impl CoreError {
    /// True for failures that indicate a numerical or ergodicity problem with
    /// the model itself rather than a malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::Ergodicity { .. }
                | CoreError::Divergence { .. }
                | CoreError::OracleFailure { .. }
                | CoreError::NonConvergence { .. }
                | CoreError::BoundViolation { .. }
        )
    }
}
