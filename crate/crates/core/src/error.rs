use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("cell {cell} is degenerate after perturbation (min Jacobian {min_jacobian:.3e})")]
    DegenerateCell { cell: usize, min_jacobian: f64 },

    #[error("{direction}-direction cell count {cells} is not divisible by {parts} subdomains")]
    NonDivisiblePartition {
        direction: &'static str,
        cells: usize,
        parts: usize,
    },

    #[error("non-positive Jacobian {det:.3e} in cell {cell}")]
    NonPositiveJacobian { cell: usize, det: f64 },

    #[error("material field violates invariant in cell {cell}: {field} = {value}")]
    InvalidMaterial {
        cell: usize,
        field: &'static str,
        value: f64,
    },

    #[error("factorization of the {variant} system on subdomain {subdomain} failed: {reason}")]
    Singular {
        subdomain: usize,
        variant: &'static str,
        reason: String,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("conjugate gradient met non-positive curvature {curvature:.3e} at iteration {iteration}")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("{solver} did not converge at step {step}: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}: row {row}, column {column}: {reason}")]
    FieldParse {
        path: PathBuf,
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
