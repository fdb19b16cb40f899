use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The CLI maps every variant to a single-line message prefixed with
/// [`Error::code`], so scripts can match on the prefix.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint has no teacher metadata (feature mean/variance)")]
    MetadataMissing,

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Stable machine-readable tag for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Parameter(_) => "E_PARAM",
            Error::Contract(_) => "E_CONTRACT",
            Error::MissingGradient(_) => "E_GRAD",
            Error::NotFound(_) => "E_NOT_FOUND",
            Error::Format(_) => "E_FORMAT",
            Error::Version { .. } => "E_VERSION",
            Error::MetadataMissing => "E_METADATA",
            Error::ConfigMismatch(_) => "E_CONFIG_MISMATCH",
            Error::Parse { .. } => "E_PARSE",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
