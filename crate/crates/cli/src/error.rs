use std::fmt;

use nowcast_core::error::NowcastError;

/// Failure classes mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, bad flags or a model/data mismatch (exit 2).
    Input(String),
    /// Some monitored R-hat exceeds the limit (exit 3).
    Convergence(String),
    /// Could not write results (exit 1).
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Convergence(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Wrap an output error with the path it concerns.
    pub fn output(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Output(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

impl From<NowcastError> for CliError {
    fn from(e: NowcastError) -> Self {
        match e {
            // record indices are zero-based and the CSV header is line 1
            NowcastError::InvalidRecord { index, reason } => {
                CliError::Input(format!("line {}: {reason}", index + 2))
            }
            NowcastError::UnknownRegion { index, region } => {
                CliError::Input(format!("line {}: unknown region `{region}`", index + 2))
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
