use std::fmt;
use std::process::ExitCode;

/// Why a command failed; decides the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config file or settings (exit 2).
    Config(String),
    /// Unreadable, missing or inconsistent input data (exit 3).
    Data(String),
    /// A loss or gradient became non-finite (exit 4).
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<sensor3d::Error> for Failure {
    fn from(e: sensor3d::Error) -> Self {
        use sensor3d::Error as E;
        match e {
            E::NonFinite(_) => Failure::Numeric(e.to_string()),
            E::InvalidArgument(_) | E::ConfigMismatch { .. } | E::ShapeMismatch { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Data(e.to_string()),
        }
    }
}

/// Tags a library error as a data problem regardless of its kind.
pub fn data_err(context: impl fmt::Display) -> impl FnOnce(sensor3d::Error) -> Failure {
    move |e| match e {
        sensor3d::Error::NonFinite(_) => Failure::Numeric(e.to_string()),
        _ => Failure::Data(format!("{context}: {e}")),
    }
}

pub fn io_err(context: impl fmt::Display) -> impl FnOnce(std::io::Error) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

pub type CliResult<T> = Result<T, Failure>;
