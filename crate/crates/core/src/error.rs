use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({lon}, {lat}) lies outside the map")]
    OutOfBounds { lon: f64, lat: f64 },

    #[error("window of size {n} around cell ({row}, {col}) does not fit inside the map")]
    WindowClipped { row: usize, col: usize, n: usize },

    #[error("malformed map file: {0}")]
    MalformedFile(String),

    #[error("standard deviation must be positive for matching, got {0}")]
    DegenerateSigma(f64),

    #[error("no candidate paths to select from")]
    EmptyCandidates,

    #[error("exhaustive search over {0} sequences exceeds the enumeration guard")]
    TooLarge(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no iso-contour found at step {0}")]
    NoContour(usize),

    #[error("degenerate point set: {0}")]
    Degenerate(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
