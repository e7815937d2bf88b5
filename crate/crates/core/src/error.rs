use thiserror::Error;

/// Errors surfaced by the fusion pipeline and its inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("time {t} s outside scenario range [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("frame count mismatch: {what} has {got} frames, expected {expected}")]
    FrameCountMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error(transparent)]
    Codec(#[from] crate::v2v::CodecError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Options(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
