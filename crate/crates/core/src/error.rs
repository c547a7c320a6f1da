use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-monotonic frame index at line {line} ({previous} followed by {found})")]
    NonMonotonicFrame { line: usize, previous: u64, found: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("misaligned streams: {0}")]
    Misaligned(String),

    #[error("edge ({0}, {1}) in frame {2} is not a pair of that frame")]
    EdgeOutsideUniverse(u64, u64, u64),
}

pub type Result<T> = std::result::Result<T, Error>;
