use thiserror::Error;

/// Errors raised by synthesis, simulation and certification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid output dimensions: k1={k1}, k2={k2} (need k1 + k2 >= 1)")]
    InvalidDims { k1: usize, k2: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("Newton-Kleinman iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("min-norm controller infeasible: L_G V = 0 while L_F V + rate*V = {psi0:e} > 0")]
    Infeasible { psi0: f64 },

    #[error("point outside the analysis annulus: |z| = {norm}, annulus [{lo}, {hi}]")]
    OutsideAnnulus { norm: f64, lo: f64, hi: f64 },

    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
