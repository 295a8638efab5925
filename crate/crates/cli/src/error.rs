use std::fmt;
use std::process::ExitCode;

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, spec or config: exit code 2.
    Input(String),
    /// Anything else, such as an unwritable output directory: exit code 1.
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Internal(m) => m,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(1),
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        let tag = |m: String| format!("{}: {m}", path.display());
        match self {
            CliError::Input(m) => CliError::Input(tag(m)),
            CliError::Internal(m) => CliError::Internal(tag(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl From<banff_core::Error> for CliError {
    fn from(e: banff_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
