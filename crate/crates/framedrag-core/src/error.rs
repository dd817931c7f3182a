//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building states or stepping dynamics.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid model parameters: {0}")]
    Params(String),

    #[error("state norm² = {norm_sq:.12e} outside [{min}, {max}]")]
    NotNormalized { norm_sq: f64, min: f64, max: f64 },

    #[error("boundary mass {mass:.3e} exceeds leak tolerance {limit:.3e}")]
    BoundaryLeak { mass: f64, limit: f64 },

    #[error("time step {dt:.3e} violates the Euler-Maruyama stability bound {bound:.3e} (dt < dx²·M/ħ)")]
    Unstable { dt: f64, bound: f64 },

    #[error("collapse strength D must be positive for {0}")]
    ZeroCollapseStrength(&'static str),

    #[error("trace drift {drift:.3e} per step exceeds {limit:.3e}")]
    TraceDrift { drift: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dense matrix operations are capped at {max} grid points, got {got}")]
    DenseGridTooLarge { got: usize, max: usize },

    #[error("state does not fit the grid: {0}")]
    Fit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid experiment spec: {field}: {message}")]
    Spec { field: String, message: String },

    #[error("{failed}/{total} trajectories failed (budget {budget_percent}%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        budget_percent: f64,
        first: String,
    },
}

impl SimError {
    pub fn spec(field: &str, message: impl Into<String>) -> Self {
        SimError::Spec {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
