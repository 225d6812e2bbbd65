use thiserror::Error;

/// Errors raised anywhere in the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left} and {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("index {index} out of range for {len} {what}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("unknown element id {0}")]
    UnknownId(u32),
    #[error("element {0} is not in the current subset")]
    NotMember(u32),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("invalid shape spec: {0}")]
    Spec(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
