use std::fmt;
use std::path::Path;
use std::process::ExitCode;

/// Failure classes, each with its own exit status (sysexits-style).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage,
    Validation,
    Io,
}

impl Class {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Class::Usage => 2,
            Class::Validation => 65,
            Class::Io => 74,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { class: Class::Usage, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError { class: Class::Validation, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError { class: Class::Io, message: format!("{}: {err}", path.display()) }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &Path) -> Self {
        CliError { message: format!("{}: {}", path.display(), self.message), ..self }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<volregime::ingest::IngestError> for CliError {
    fn from(e: volregime::ingest::IngestError) -> Self {
        use volregime::ingest::IngestError;
        let class = match e {
            IngestError::Io(_) => Class::Io,
            IngestError::Csv(ref c) if c.is_io_error() => Class::Io,
            _ => Class::Validation,
        };
        CliError { class, message: e.to_string() }
    }
}

impl From<volregime::segmentation::SegmentationError> for CliError {
    fn from(e: volregime::segmentation::SegmentationError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<volregime::aggregate::AggregateError> for CliError {
    fn from(e: volregime::aggregate::AggregateError) -> Self {
        use volregime::aggregate::AggregateError;
        let class = match e {
            AggregateError::Io(_) => Class::Io,
            _ => Class::Validation,
        };
        CliError { class, message: e.to_string() }
    }
}

impl From<volregime::synthetic::SpecError> for CliError {
    fn from(e: volregime::synthetic::SpecError) -> Self {
        CliError::usage(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
