//! Command failures and their process exit codes.

use std::fmt;
use std::path::Path;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Validation(String),
    Divergence(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Divergence(_) => EXIT_DIVERGENCE,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage error", m),
            Failure::Io(m) => ("i/o error", m),
            Failure::Validation(m) => ("validation failed", m),
            Failure::Divergence(m) => ("training diverged", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<entroseg::Error> for Failure {
    fn from(e: entroseg::Error) -> Self {
        match e {
            entroseg::Error::Io { .. } => Failure::Io(e.to_string()),
            entroseg::Error::Divergence { .. } => Failure::Divergence(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
