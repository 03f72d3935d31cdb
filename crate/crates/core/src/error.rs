use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("CFL violated at step {step}: dt*(rate) = {value:.6} > {limit:.6}")]
    Cfl { step: usize, value: f64, limit: f64 },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("did not converge: {what} (residual {residual:.3e} after {iterations} iterations)")]
    NotConverged {
        what: String,
        residual: f64,
        iterations: usize,
    },

    #[error("Fredholm condition fails: right-hand side mean {mean:.3e} exceeds {limit:.3e}")]
    Fredholm { mean: f64, limit: f64 },

    #[error("query ({x}, {p}, {l}) outside table hull; enlarge the table box")]
    OutOfHull { x: f64, p: f64, l: f64 },

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
