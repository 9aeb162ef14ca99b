use std::path::PathBuf;

use marginal_cox::Error;

/// Exit codes follow the BSD `sysexits` convention where one applies.
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Validation(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::Validation(_) => "validation",
            CliError::Io { .. } => "io",
        }
    }

    fn reason(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "bad arguments",
            CliError::Config { .. } => "bad config",
            CliError::Io { .. } => "io failure",
            CliError::Validation(e) => validation_reason(e),
        }
    }

    /// One `key=value` line for stderr.
    pub fn report(&self) -> String {
        let detail = self.to_string().replace('"', "'").replace('\n', " ");
        format!(
            "error kind={} reason=\"{}\" detail=\"{}\"",
            self.kind(),
            self.reason(),
            detail
        )
    }
}

fn validation_reason(e: &Error) -> &'static str {
    match e {
        Error::DuplicateTime { .. } => "duplicate event time",
        Error::OutOfRange { .. } => "event out of range",
        Error::NonFinite(_) => "non-finite value",
        Error::InvalidParameter(_) => "invalid parameter",
        Error::DegreeTooHigh { .. } => "degree too high",
        Error::NegativeIntensity { .. } => "negative intensity",
        Error::HorizonMismatch { .. } => "horizon mismatch",
        Error::NoEventsAfterAdaptation => "no events after adaptation",
        Error::StepTooCoarse { .. } => "grid step too coarse",
        Error::GridCollision { .. } => "grid collision",
        Error::NoConvergence { .. } => "no convergence",
        Error::EmptyChain => "empty chain",
        Error::Batch { source, .. } => validation_reason(source),
    }
}
