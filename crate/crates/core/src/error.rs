use thiserror::Error;

/// Errors raised by the numerical routines and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    IterationFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular tridiagonal system (zero pivot at row {row})")]
    SingularSystem { row: usize },

    #[error("no sign change on bracket [{lo}, {hi}]: values {f_lo:.6e} and {f_hi:.6e}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("existence gate violated: {0}")]
    GateViolation(String),

    #[error(
        "inner Newton solve stagnated after {halvings} step halvings \
         (residual {residual:.3e}, newton iteration {iteration})"
    )]
    InnerSolve {
        iteration: usize,
        halvings: usize,
        residual: f64,
    },

    #[error("monotone scheme broke ordering by {violation:.3e} at outer iteration {iteration}")]
    SchemeFailure { iteration: usize, violation: f64 },

    #[error("implicit step failed after {halvings} time-step halvings (dt = {dt:.3e})")]
    StepFailure { halvings: usize, dt: f64 },

    #[error("path weight exploded to {weight:.3e} at t = {time:.3}; shorten the horizon or check the gate")]
    ExplodingWeight { weight: f64, time: f64 },

    #[error("branch inconsistency: {0}")]
    Branch(String),

    #[error("scenario config: field `{field}`: {message}")]
    Scenario { field: &'static str, message: String },

    #[error("no bubble: {0}")]
    NoBubble(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
