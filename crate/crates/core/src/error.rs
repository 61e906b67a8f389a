use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state has {got} amplitudes but the chain has {expected} sites")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bond index {bond} out of range for a chain of {n_sites} sites")]
    BondOutOfRange { bond: usize, n_sites: usize },

    #[error("step size {step:e} fell below the minimum at t = {time}")]
    StepUnderflow { time: f64, step: f64 },

    #[error("non-finite amplitude encountered; last good time t = {last_good_time}")]
    NonFinite { last_good_time: f64 },

    #[error("trajectory ends at t = {available} but the averaging window needs t = {required}")]
    WindowTooShort { required: f64, available: f64 },

    #[error("all {attempted} realizations failed")]
    AllRealizationsFailed { attempted: usize },

    #[error("no threshold crossing within the scanned lengths")]
    NoThresholdInRange,

    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate fit data: {0}")]
    DegenerateData(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("steady state is not converged; refusing to linearize")]
    NotConvergedInput,

    #[error("eigenvalue computation failed")]
    EigenFailure,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
