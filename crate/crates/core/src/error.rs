use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("signal length {0} must be even and non-zero")]
    OddLength(usize),

    #[error("non-finite gradient in parameter group `{group}` at index {index}")]
    NonFinite { group: String, index: usize },

    #[error("stale plane cache: parameters changed since the last reconstruction")]
    StaleCache,

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("image format error: {0}")]
    Image(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures while decoding a `.dare` container or one of its entropy-coded streams.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported format version {0}")]
    Version(u16),

    #[error("crc mismatch in section `{section}`")]
    Crc { section: &'static str },

    #[error("corrupt stream in section `{section}`: {detail}")]
    Corrupt { section: &'static str, detail: String },

    #[error("truncated header")]
    TruncatedHeader,
}

pub type Result<T> = std::result::Result<T, Error>;
