use std::fmt;
use std::process::ExitCode;

use gripline_core::Error;

/// Process exit codes. Usage errors (unknown flag, bad value) exit with 2,
/// the code clap uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Ok = 0,
    Runtime = 1,
    Usage = 2,
    Config = 3,
    Checkpoint = 4,
    Track = 5,
    Io = 6,
    VerifyFailed = 7,
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> Self {
        ExitCode::from(c as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub msg: String,
}

impl CliError {
    pub fn new(code: Code, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            Code::Ok => "ok",
            Code::Runtime => "error",
            Code::Usage => "usage error",
            Code::Config => "config error",
            Code::Checkpoint => "checkpoint error",
            Code::Track => "track error",
            Code::Io => "i/o error",
            Code::VerifyFailed => "verification failed",
        };
        write!(f, "{kind}: {}", self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidParams(_) | Error::CsvParse { .. } => Code::Config,
            Error::Checkpoint(_) | Error::Shape(_) => Code::Checkpoint,
            Error::TrackParse { .. }
            | Error::OpenLoop { .. }
            | Error::NonMonotone { .. }
            | Error::WidthTooSmall { .. }
            | Error::InvalidTrack(_) => Code::Track,
            Error::Io { .. } => Code::Io,
            _ => Code::Runtime,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
