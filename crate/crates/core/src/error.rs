use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty key set")]
    EmptyKeySet,

    #[error("bin count must be at least 1")]
    ZeroBins,

    #[error("histogram bin counts differ: {left} vs {right}")]
    BinMismatch { left: usize, right: usize },

    #[error("keys are not sorted at index {index}")]
    Unsorted { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("training pool entry {entry} failed: {source}")]
    PoolTraining {
        entry: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors raised while decoding a persisted model pool.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported pool format version {0}")]
    UnsupportedVersion(u8),

    #[error("file truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("malformed pool file: {0}")]
    Malformed(String),
}
