use std::fmt;
use std::process::ExitCode;

/// Failure classes with stable exit codes: 2 usage, 3 data, 4 estimation.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation error: {m}"),
        }
    }
}

impl From<survfair::Error> for CliError {
    fn from(e: survfair::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Estimation(e.to_string())
        }
    }
}
