//! Crate-wide error type for the computational pipeline.

use crate::geometry::GeometryError;
use crate::model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("non-finite integrand at node {position:?} with mark {mark}")]
    NonFiniteIntegrand { position: Vec<f64>, mark: usize },

    #[error(
        "insufficient guard: region needs margin {needed} inside the observed window (available {available})"
    )]
    InsufficientGuard { needed: f64, available: f64 },

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("singular pseudolikelihood Hessian (condition number {condition:.3e})")]
    SingularHessian { condition: f64 },

    #[error("fit failed: {reason} (gradient norm {gradient_norm:.3e} after {iterations} iterations)")]
    FitFailed {
        reason: String,
        gradient_norm: f64,
        iterations: usize,
    },

    #[error("degenerate normalization in {context}: eigenvalues {eigenvalues:?}")]
    DegenerateNormalization {
        context: String,
        eigenvalues: Vec<f64>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "calibration failed: {degenerate} of {total} replicates degenerate (limit 20%)"
    )]
    CalibrationFailed { degenerate: usize, total: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("pattern file format error at line {line}: {message}")]
    PatternFormat { line: usize, message: String },
}
