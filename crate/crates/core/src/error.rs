use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("track file line {line}: {msg}")]
    TrackParse { line: usize, msg: String },
    #[error("open loop: centerline end is {gap:.6} m / {heading_gap:.6} rad away from its start")]
    OpenLoop { gap: f64, heading_gap: f64 },
    #[error("non-monotone arc length at s = {s}")]
    NonMonotone { s: f64 },
    #[error("half width {width} m at s = {s} is below the 2 m minimum")]
    WidthTooSmall { s: f64, width: f64 },
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("diverged: non-finite vehicle state")]
    Diverged,
    #[error("step called on a finished episode; reset first")]
    EpisodeOver,
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("numeric overflow in {0}")]
    NumericOverflow(&'static str),
    #[error("detached graph: {0}")]
    DetachedGraph(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error("csv line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("empty telemetry")]
    EmptyTelemetry,
    #[error("non-overlapping distance ranges: {0}")]
    NonOverlapping(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
