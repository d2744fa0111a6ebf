use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parse failures for the binary file formats (container, EDF, checkpoint).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("truncated {what}: needed {needed} bytes, {available} available")]
    Truncated {
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("header/payload size mismatch: header declares {declared} bytes of samples, payload has {actual}")]
    SizeMismatch { declared: usize, actual: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("non-ASCII byte in EDF header field `{field}`")]
    NonAscii { field: String },
    #[error("inconsistent record count: header declares {declared}, file holds {actual}")]
    RecordCount { declared: i64, actual: usize },
    #[error("signal {signal} has zero digital range ({digital_min}..{digital_max})")]
    ZeroDigitalRange {
        signal: usize,
        digital_min: i32,
        digital_max: i32,
    },
    #[error("data record {index} is truncated")]
    TruncatedRecord { index: usize },
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
