use std::fmt;
use torus_galerkin::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Divergence,
    ResonanceMisroute,
    Io,
}

impl ErrorKind {
    pub fn code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Divergence => 3,
            ErrorKind::ResonanceMisroute => 4,
            ErrorKind::Io => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Validation, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Io, message: msg.into() }
    }

    pub fn code(&self) -> i32 {
        self.kind.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            ErrorKind::Validation => "validation error",
            ErrorKind::Divergence => "solver did not converge",
            ErrorKind::ResonanceMisroute => "resonance misroute",
            ErrorKind::Io => "i/o error",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Resonant(_) | Error::ZeroMultiplier { .. } => ErrorKind::ResonanceMisroute,
            Error::Divergence { .. }
            | Error::BallEscape { .. }
            | Error::MaxIter(_)
            | Error::Stagnation(_)
            | Error::Collapse(_)
            | Error::AlphaTooLarge(_)
            | Error::DomainViolation { .. }
            | Error::QuadratureTail { .. } => ErrorKind::Divergence,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::io(e.to_string())
        } else {
            CliError::validation(format!("malformed CSV: {e}"))
        }
    }
}
