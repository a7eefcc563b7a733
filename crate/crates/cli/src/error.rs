use std::fmt;
use std::path::Path;

/// Exit code 1: bad flags, config or parameters.
pub const EXIT_USAGE: i32 = 1;
/// Exit code 2: missing, unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vcd_core::Error> for CliError {
    fn from(e: vcd_core::Error) -> Self {
        use vcd_core::Error::*;
        match e {
            InvalidParameter(_) | UnknownStrategy(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// A data error naming `path`.
pub fn data(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub trait PathContext<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T> PathContext<T> for vcd_core::Result<T> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        })
    }
}
