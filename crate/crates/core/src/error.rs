use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in layer {layer_id} at image {image}")]
    NonFinite { layer_id: i64, image: usize },

    #[error("non-finite value in global features at image {image}")]
    NonFiniteGlobal { image: usize },

    #[error("global feature row {image} has zero norm")]
    ZeroNormRow { image: usize },

    #[error("{path}: malformed PGM header: {message}")]
    PgmHeader { path: PathBuf, message: String },

    #[error("{path}: unsupported raster format: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },

    #[error("{path}: truncated payload: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("ground truth inconsistent: {0}")]
    GroundTruth(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance too large for the reference oracle: {0}")]
    TooLarge(String),

    #[error("runtime limit of {limit_secs} s exceeded during {stage}")]
    TimeLimit { limit_secs: f64, stage: String },
}

/// Coarse error classes, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    TimeLimit,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn manifest(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Manifest {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorKind::Usage,
            Error::TimeLimit { .. } => ErrorKind::TimeLimit,
            _ => ErrorKind::Data,
        }
    }

    /// Short stable identifier for machine-readable error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Manifest { .. } => "manifest",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFinite { .. } | Error::NonFiniteGlobal { .. } => "non_finite",
            Error::ZeroNormRow { .. } => "zero_norm_row",
            Error::PgmHeader { .. } => "pgm_header",
            Error::UnsupportedFormat { .. } => "unsupported_format",
            Error::Truncated { .. } => "truncated",
            Error::GroundTruth(_) => "ground_truth",
            Error::SizeMismatch(_) => "size_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::TooLarge(_) => "too_large",
            Error::TimeLimit { .. } => "time_limit",
        }
    }
}
