use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: &'static str, reason: String },

    #[error("region of interest lies outside the score-map extent")]
    OutOfBounds,

    #[error("degenerate motion state: {0}")]
    DegenerateState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature gallery is empty")]
    EmptyGallery,

    #[error("triplet batch is empty")]
    EmptyBatch,

    #[error("no stored feature for frame {frame} near box {bbox}")]
    MissingFeature { frame: u32, bbox: String },

    #[error("malformed fixture: {0}")]
    Format(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("frame index {got} does not follow previous frame {previous}")]
    Sequence { previous: u32, got: u32 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn in_frame(self, frame: u32) -> Self {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                frame,
                source: Box::new(e),
            },
        }
    }
}
