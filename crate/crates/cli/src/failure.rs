use std::fmt;

use aud_core::{Error, ErrorKind};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// A failed stage of a subcommand, with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub stage: String,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            stage: "arguments".into(),
            message: message.into(),
        }
    }

    pub fn invalid(stage: &str, message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn io(stage: &str, path: &std::path::Path, err: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            stage: stage.into(),
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Attaches the failing stage to library errors.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, Failure>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: exit_code(e.kind()),
            stage: stage.into(),
            message: e.to_string(),
        })
    }
}
