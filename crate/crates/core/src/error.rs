use std::fmt;
use std::path::PathBuf;

use crate::tensor::Shape4;

/// One of the four tensor axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Channels,
    Height,
    Width,
    Depth,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Axis::Channels => "channels",
            Axis::Height => "height",
            Axis::Width => "width",
            Axis::Depth => "depth",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("kernel extent {kernel} exceeds input extent {input} on the {axis} axis")]
    KernelTooLarge { axis: Axis, kernel: usize, input: usize },

    #[error("pooling window {window} leaves no output on the {axis} axis (input extent {input})")]
    WindowTooLarge { axis: Axis, window: usize, input: usize },

    #[error("node `{node}` is unbuildable: {source}")]
    Unbuildable {
        node: String,
        #[source]
        source: Box<Error>,
    },

    #[error("input slot {slot} expects shape {expected}, got {actual}")]
    EntryShape {
        slot: usize,
        expected: Shape4,
        actual: Shape4,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("backward pass requires a cache from a train-mode forward pass")]
    MissingCache,

    #[error("clip has {frames} frames but {required} are required")]
    TooFewFrames { frames: usize, required: usize },

    #[error("frame {frame}: {message}")]
    FrameDimension { frame: String, message: String },

    #[error("degenerate crop box in frame {frame}")]
    DegenerateBox { frame: usize },

    #[error("landmarks required for {0}")]
    LandmarksRequired(String),

    #[error("empty {0} subset")]
    EmptySubset(String),

    #[error("need at least {required} epochs, log has {available}")]
    TooFewEpochs { required: usize, available: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },

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

    pub(crate) fn malformed(what: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Malformed {
            what: what.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
