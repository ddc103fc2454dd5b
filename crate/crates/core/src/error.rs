use thiserror::Error;

/// Errors raised by the spectral, evolution, control and mild-solution layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("Hermitian symmetry violated (defect {defect:e})")]
    SymmetryViolation { defect: f64 },

    #[error("duality exponent p = {0} is not supported (need p >= 2; p > 2 needs a real field)")]
    UnsupportedExponent(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrator step {step:e} exceeds the stability limit {limit:e} for mode {mode}")]
    StepTooLarge { mode: i64, step: f64, limit: f64 },

    #[error("iteration failed after {iterations} iterations (residual {residual:e})")]
    IterationFailure { iterations: usize, residual: f64 },

    #[error("fixed point not reached after {iterations} iterations (last residual {:e})", residual_history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { iterations: usize, residual_history: Vec<f64> },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
