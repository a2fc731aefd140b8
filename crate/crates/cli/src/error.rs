use std::fmt;
use std::path::{Path, PathBuf};

pub enum CliError {
    File { path: PathBuf, source: cspn_core::Error },
    Core(cspn_core::Error),
    Breach(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use cspn_core::Error;
        let core = match self {
            CliError::Breach(_) => return 6,
            CliError::File { source, .. } => source,
            CliError::Core(e) => e,
        };
        match core {
            Error::Io(_) => 3,
            Error::Parse(_) => 4,
            _ => 5,
        }
    }
}

impl From<cspn_core::Error> for CliError {
    fn from(e: cspn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::File { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Breach(msg) => f.write_str(msg),
        }
    }
}

/// Attaches `path` to errors raised while reading or writing it.
pub trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> WithPath<T> for cspn_core::Result<T> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
    }
}
