use thiserror::Error;

/// Failures raised by the solvers and their numerical building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate channel: gain {0} must be strictly positive")]
    DegenerateChannel(f64),

    /// The averaged delay or power integrals diverge at the origin unless m > 2.
    #[error("expectation diverges for fading order m = {m}; averaging requires m > 2")]
    ConvergenceGuard { m: f64 },

    #[error("quadrature could not reach tolerance {tol:e} (error estimate {estimate:e})")]
    Accuracy { tol: f64, estimate: f64 },

    #[error("no sign change bracketed for {what}")]
    BracketFailure { what: String },

    #[error("root not found: {0}")]
    RootNotFound(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("damped Newton diverged after {iterations} steps (residual {residual:e}, gains {gains:?})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        gains: Vec<f64>,
    },

    #[error("sub-gradient calibration did not converge after {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("{failed} of {total} realizations failed (first: {first})")]
    FailureRate {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
