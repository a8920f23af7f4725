use std::fmt;
use std::io;

use thiserror::Error;

/// Category of a configuration diagnostic. Decides the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationClass {
    Config,
    Physics,
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
    pub class: ViolationClass,
}

impl Violation {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
            class: ViolationClass::Config,
        }
    }

    pub fn physics(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
            class: ViolationClass::Physics,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("protocol/bank mismatch: {0}")]
    Mismatch(String),

    #[error("trace inconsistent at slot {slot}: {message}")]
    Trace { slot: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl fmt::Display, source: io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    ///
    /// 2 config error, 3 physics validation error, 4 I/O error,
    /// 5 protocol/bank mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(v) => {
                if v.iter().any(|x| x.class == ViolationClass::Config) {
                    2
                } else {
                    3
                }
            }
            Error::Parse { .. } | Error::Format(_) => 2,
            Error::Domain(_) => 3,
            Error::Io { .. } => 4,
            Error::Mismatch(_) => 5,
            Error::Trace { .. } => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
