use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the library. Every variant carries enough context to
/// diagnose the failure without a debugger: offending shapes, file paths,
/// line numbers, byte offsets.
#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shape disagreement; `detail` reports both shapes.
    Shape { op: &'static str, detail: String },
    /// An argument outside the operation's domain (negative rate, empty split, ...).
    InvalidArg { op: &'static str, detail: String },
    /// Reduction axis not below the tensor rank.
    AxisOutOfRange { axis: usize, rank: usize },
    /// A NaN or infinity where a finite value is required.
    NonFinite { op: &'static str, detail: String },
    /// Dataset ingestion failure with file/line context where known.
    Data {
        path: Option<PathBuf>,
        line: Option<usize>,
        detail: String,
    },
    /// Checkpoint encode/decode failure; `offset` points into the file when known.
    Checkpoint {
        detail: String,
        offset: Option<u64>,
    },
    Io {
        path: Option<PathBuf>,
        source: std::io::Error,
    },
    Json { detail: String },
    Config { detail: String },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArg {
            op,
            detail: detail.into(),
        }
    }

    pub fn non_finite(op: &'static str, detail: impl Into<String>) -> Self {
        Error::NonFinite {
            op,
            detail: detail.into(),
        }
    }

    pub fn data(path: Option<PathBuf>, line: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Data {
            path,
            line,
            detail: detail.into(),
        }
    }

    pub fn checkpoint(detail: impl Into<String>, offset: Option<u64>) -> Self {
        Error::Checkpoint {
            detail: detail.into(),
            offset,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config {
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArg { op, detail } => write!(f, "{op}: invalid argument: {detail}"),
            Error::AxisOutOfRange { axis, rank } => {
                write!(f, "axis {axis} out of range for rank {rank}")
            }
            Error::NonFinite { op, detail } => write!(f, "{op}: non-finite value: {detail}"),
            Error::Data { path, line, detail } => {
                write!(f, "data error")?;
                if let Some(p) = path {
                    write!(f, " in {}", p.display())?;
                }
                if let Some(l) = line {
                    write!(f, " at line {l}")?;
                }
                write!(f, ": {detail}")
            }
            Error::Checkpoint { detail, offset } => {
                write!(f, "checkpoint error: {detail}")?;
                if let Some(o) = offset {
                    write!(f, " (byte offset {o})")?;
                }
                Ok(())
            }
            Error::Io { path, source } => {
                write!(f, "io error")?;
                if let Some(p) = path {
                    write!(f, " on {}", p.display())?;
                }
                write!(f, ": {source}")
            }
            Error::Json { detail } => write!(f, "json error: {detail}"),
            Error::Config { detail } => write!(f, "config error: {detail}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json {
            detail: e.to_string(),
        }
    }
}
