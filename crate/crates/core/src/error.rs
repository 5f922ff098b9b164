use thiserror::Error;

/// Errors produced by the analysis, simulation and co-design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid privacy parameter: {0}")]
    InvalidPrivacy(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "unstable step size: gamma * d_max = {gamma_dmax:.6} (must be < 1), gamma * lambda_max = {gamma_lmax:.6}"
    )]
    UnstableStepSize { gamma_dmax: f64, gamma_lmax: f64 },

    #[error("graph is disconnected (lambda2 = {lambda2:e}); steady state requires a connected topology")]
    Disconnected { lambda2: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("co-design problem is infeasible: {binding} ({detail})")]
    Infeasible { binding: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
