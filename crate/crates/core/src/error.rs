use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pole proximity: |denominator| = {magnitude:e} at z = {z}")]
    PoleProximity { z: num_complex::Complex64, magnitude: f64 },

    #[error("windowing: weighted boundary magnitude {boundary:e} exceeds {limit:e} (peak {peak:e})")]
    Windowing { boundary: f64, limit: f64, peak: f64 },

    #[error("rational function is not analytic at 0 (denominator(0) = 0)")]
    NotAnalyticAtZero,

    #[error("repeated pole near s = {0}; only simple poles are supported")]
    RepeatedPole(num_complex::Complex64),

    #[error("realization has complex coefficients and cannot drive a real time stepper")]
    ComplexRealization,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("target c = {target} unreachable for rho <= {rho_max:e}")]
    UnreachableTarget { target: f64, rho_max: f64 },

    #[error("singular step matrix (dt = {dt:e}): {detail}")]
    SingularSystem { dt: f64, detail: String },

    #[error("unsupported by the spectral oracle: {0}")]
    OracleUnsupported(String),

    #[error("window too short: weighted tail {tail:e} exceeds 1e-6 of peak {peak:e}")]
    WindowTooShort { tail: f64, peak: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
