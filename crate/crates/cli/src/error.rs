use std::fmt;
use std::path::Path;

use fan_core::Error as CoreError;

/// Exit code for bad input: missing files, malformed data, invalid config.
pub const EXIT_USER: u8 = 2;
/// Exit code for divergence and failures not caused by the input.
pub const EXIT_INTERNAL: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { code: EXIT_USER, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }

    /// Classifies a library error: divergence and I/O failures while
    /// writing are internal, everything else traces back to the input.
    pub fn from_core(context: &str, err: CoreError) -> Self {
        let code = match innermost(&err) {
            CoreError::Divergence { .. } | CoreError::Io(_) => EXIT_INTERNAL,
            _ => EXIT_USER,
        };
        Self { code, message: format!("{context}: {err}") }
    }
}

fn innermost(err: &CoreError) -> &CoreError {
    match err {
        CoreError::Cell { source, .. } => innermost(source),
        other => other,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Failure to read an input file is the user's problem.
pub fn read_error(path: &Path, err: std::io::Error) -> CliError {
    CliError::user(format!("cannot read {}: {err}", path.display()))
}

/// Failure to write an output file.
pub fn write_error(path: &Path, err: impl fmt::Display) -> CliError {
    CliError::user(format!("cannot write {}: {err}", path.display()))
}
