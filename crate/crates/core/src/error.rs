use std::path::PathBuf;

/// Errors raised anywhere in the screening pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("unsupported maxval {0}")]
    UnsupportedMaxval(u32),

    #[error("truncated pixel data: expected {expected} values, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("image dimensions {width}x{height} out of range (1..=8192)")]
    DimensionOverflow { width: usize, height: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("canvas too crowded: could not place cell {cell} after {attempts} attempts")]
    CanvasTooCrowded { cell: usize, attempts: usize },

    #[error("single-class dataset")]
    SingleClass,

    #[error("empty patch pool")]
    EmptyPatchPool,

    #[error("no measurable cells")]
    NoMeasurableCells,

    #[error("inconsistent partition: children do not sum to parent counts")]
    InconsistentPartition,

    #[error("non-finite feature value at sample {sample}, feature {feature}")]
    NonFinite { sample: usize, feature: usize },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
