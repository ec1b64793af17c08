use std::path::Path;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input, inconsistent files.
    #[error("{0}")]
    Usage(String),
    #[error("no certificate: {0}")]
    NoCertificate(String),
    #[error("verification failed: {0}")]
    Violation(String),
    /// A computation failed for reasons other than infeasibility.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) => 1,
            CliError::NoCertificate(_) => 2,
            CliError::Violation(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }
}

impl From<mdcert_core::Error> for CliError {
    fn from(e: mdcert_core::Error) -> Self {
        use mdcert_core::Error as E;
        match e {
            E::NoCertificate(m) => CliError::NoCertificate(m),
            E::InvalidParameter { .. }
            | E::DimensionMismatch { .. }
            | E::NotSymmetric { .. }
            | E::Parse { .. }
            | E::Disconnected
            | E::MetadataMismatch(_)
            | E::OutOfRange { .. }
            | E::StatesNotRetained => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
