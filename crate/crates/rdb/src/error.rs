use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("duplicate record (frame {frame}, agent {agent_id}) at {path}:{line}")]
    DuplicateRecord {
        path: PathBuf,
        line: usize,
        frame: u32,
        agent_id: u32,
    },
    #[error("coordinate out of range at {path}:{line}: {value} not in [0, {max}]")]
    CoordinateRange {
        path: PathBuf,
        line: usize,
        value: f64,
        max: f64,
    },
    #[error("index out of bounds: {0}")]
    Index(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("numeric error in {context}: {msg}")]
    Numeric { context: String, msg: String },
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("context alignment error: {0}")]
    Alignment(String),
    #[error("scene generation error: {0}")]
    Generation(String),
    #[error("malformed checkpoint at {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numeric(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            msg: msg.into(),
        }
    }
}
