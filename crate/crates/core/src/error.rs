use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample set is empty")]
    EmptySample,

    #[error("version space is infeasible")]
    Infeasible,

    #[error("operation `{op}` is not supported for {kind}")]
    Unsupported { op: &'static str, kind: String },

    #[error("recursion state out of order: {0}")]
    InvalidState(String),

    #[error("enumeration needs {outcomes} outcomes, cap is {cap}")]
    EnumerationTooLarge { outcomes: f64, cap: f64 },

    #[error("calibration envelope exceeds psi_tilde by {excess:e} for {loss}")]
    EnvelopeValidation { loss: String, excess: f64 },

    #[error("conic solver stopped with status {0}")]
    Solver(String),

    #[error("batch stream indices must be strictly increasing ({prev} then {next})")]
    NonIncreasingIndex { prev: u64, next: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
