use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be finite")]
    NonFinite { what: String },

    #[error("invalid projection: {0}")]
    InvalidProjection(String),

    #[error("{what} must be > 0")]
    NonPositiveScale { what: String },

    #[error("{0}")]
    InvalidSpec(String),

    #[error("{field}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        field: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{field}: value {value} outside [{min}, {max}]")]
    OutOfRange {
        field: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("{what}: expected {expected} entries, got {actual}")]
    CountMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("unknown model group {0}")]
    UnknownGroup(usize),

    #[error(
        "atlas {width}x{height} exceeds the maximum dimension {max}; \
         shard the scenes across several renderer instances"
    )]
    AtlasTooLarge { width: u64, height: u64, max: u32 },

    #[error("scene index {index} out of range for {count} scenes")]
    SceneOutOfRange { index: usize, count: usize },

    #[error("atlas is {actual_w}x{actual_h}, layout expects {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("layout plans {layout} scenes but the batch has {state}")]
    LayoutMismatch { layout: usize, state: usize },

    #[error("mesh {name}: {reason}")]
    Mesh { name: String, reason: String },

    #[error("obj line {line}: {reason}")]
    Obj { line: usize, reason: String },

    #[error("hardware backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("device-resident frames are not supported on this device; use HostCopy")]
    DeviceResidentUnsupported,

    #[error("frame handle used after release")]
    ReleasedHandle,

    #[error("config: {0}")]
    Config(String),

    #[error("worker {index}: {reason}")]
    Worker { index: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
