use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("graph is not connected (every agent must be reachable from every other)")]
    Disconnected,

    #[error("{0}")]
    NoCertificate(String),

    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("scalar Newton solve did not converge after {iterations} iterations")]
    NewtonFailed { iterations: usize },

    #[error("iterative solve did not converge: {0}")]
    NotConverged(String),

    #[error("per-agent and stacked recursions disagree at iteration {iteration} (gap {gap:e})")]
    Inconsistent { iteration: usize, gap: f64 },

    #[error("index {index} out of range (valid: {lo}..={hi})")]
    OutOfRange { index: usize, lo: usize, hi: usize },

    #[error("trajectory does not retain per-iterate states")]
    StatesNotRetained,

    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
