//! Driver error taxonomy. Each failure is tagged by phase, and the tag
//! fixes both the process exit code and the machine-readable `kind` string
//! of the error JSON printed to stderr.

use std::fmt;

/// Everything the driver can fail with.
#[derive(Debug)]
pub enum CliError {
    /// The config file could not be read or did not parse.
    Parse(String),
    /// The inputs parsed but do not describe an admissible run.
    Validation(String),
    /// The run was admissible but a solver or measurement failed, or an
    /// output file could not be written.
    Runtime(String),
}

impl CliError {
    /// Stable error-kind string for the error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "config-parse-error",
            CliError::Validation(_) => "validation-error",
            CliError::Runtime(_) => "solver-failure",
        }
    }

    /// Exit code: 2 for bad inputs, 3 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

/// Maps a core-library error onto the driver taxonomy: precondition and
/// shape violations mean the inputs were inadmissible; everything else is
/// a genuine runtime failure.
pub fn core_err(e: fplab_core::Error) -> CliError {
    use fplab_core::Error as E;
    match e {
        E::InvalidParameter(_) | E::ShapeMismatch { .. } | E::InvalidTestFunction(_) => {
            CliError::Validation(e.to_string())
        }
        _ => CliError::Runtime(e.to_string()),
    }
}

/// Shorthand for a validation error from any displayable cause.
pub fn validation(msg: impl fmt::Display) -> CliError {
    CliError::Validation(msg.to_string())
}

/// Shorthand for a runtime error from any displayable cause.
pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}
