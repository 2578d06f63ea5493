use std::fmt;
use std::process::ExitCode;

use cvar_mdp::Error as CoreError;

/// A failed command, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed files, bad flags: exit 2.
    Input(anyhow::Error),
    /// A model that is invalid or violates the ergodicity assumption: exit 3.
    Model(anyhow::Error),
    /// Numerical failure inside a solver: exit 4.
    Solver(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Model(_) => 3,
            CliError::Solver(_) => 4,
        })
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        CliError::Input(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, e) = match self {
            CliError::Input(e) => ("input error", e),
            CliError::Model(e) => ("model error", e),
            CliError::Solver(e) => ("solver error", e),
        };
        write!(f, "{kind}: {e:#}")
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::DimensionMismatch(_) | CoreError::InvalidParameter(_) => CliError::Input(e.into()),
            CoreError::InvalidModel(_) | CoreError::NotErgodic(_) => CliError::Model(e.into()),
            CoreError::SingularSystem(_) | CoreError::NonConvergence { .. } => CliError::Solver(e.into()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches context to I/O and parse failures, all of which are input errors.
pub trait InputContext<T> {
    fn input_context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for std::result::Result<T, E> {
    fn input_context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Input(e.into().context(what.to_string())))
    }
}
