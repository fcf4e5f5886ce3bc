use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment-undefined: observer is directly above or below the centroid of segment {segment_id}")]
    AlignmentUndefined { segment_id: u64 },

    #[error("empty-voxelization: every point of segment {segment_id} fell outside the grid")]
    EmptyVoxelization { segment_id: u64 },

    #[error("degenerate-segment: {0}")]
    DegenerateSegment(String),

    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("shape mismatch at layer {layer} ({kind}): expected input {expected:?}, found {found:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid layer stack: {0}")]
    InvalidStack(String),

    #[error("backward called without a cached train-mode forward pass")]
    NoCachedForward,

    #[error("class index {index} out of range for {width} classes")]
    ClassIndexOutOfRange { index: usize, width: usize },

    #[error("cannot sample {requested} {kind} pairs: only {available} distinct pairs exist")]
    InsufficientPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("need at least two classes after filtering, found {0}")]
    TooFewClasses(usize),

    #[error("both labels must be present, got only label {0}")]
    SingleLabel(u8),

    #[error("no eligible entries: {0}")]
    NoEligibleEntries(&'static str),

    #[error("model for method `{0}` is not trained")]
    UntrainedModel(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{path}: line {line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error("{path}: truncated input at byte offset {offset}")]
    Truncated { path: String, offset: u64 },

    #[error("{path}: unsupported format version `{found}` (expected `{expected}`)")]
    VersionMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("duplicate segment id {0}")]
    DuplicateSegmentId(u64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
