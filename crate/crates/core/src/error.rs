use thiserror::Error;

/// Errors raised by the localisation and calibration pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate triangle (area {area:e} m^2)")]
    DegenerateTriangle { area: f64 },

    #[error("angular spectrum is flat; no direction can be extracted")]
    FlatSpectrum,

    #[error("negative time of flight ({tof_s:e} s): clock timestamps are inconsistent")]
    NegativeTimeOfFlight { tof_s: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("need at least {needed} sessions, got {got}")]
    NotEnoughSessions { needed: usize, got: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
