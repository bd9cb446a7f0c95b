use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report. Variant names double as the
/// machine-readable error kind printed by the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    // ingest
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("count header declares {declared} rows but body has {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("pen stream is empty")]
    EmptyStream,
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("invalid label {0:?} (expected TD or DYG)")]
    InvalidLabel(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateSampleId(String),
    #[error("record {0:?} rejected: no on-surface samples")]
    RecordRejected(String),
    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),

    // raster
    #[error("record {0:?} has no ink")]
    NoInk(String),

    // offline features
    #[error("embedding row {sample_id:?} has {found} values, expected {expected}")]
    DimMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in row {0:?}")]
    NonFiniteValue(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("missing sample {0:?}")]
    MissingSample(String),

    // models
    #[error("training data contains a single class")]
    SingleClassInput,
    #[error("non-finite training input at row {0}")]
    NonFiniteInput(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model schema mismatch: {0}")]
    SchemaVersionMismatch(String),

    // fusion
    #[error("empty probability list")]
    EmptyInput,
    #[error("sample id mismatch: {0:?} vs {1:?}")]
    SampleIdMismatch(String, String),

    // eval
    #[error("{subjects} subjects cannot fill {k} folds")]
    TooFewSubjects { subjects: usize, k: usize },
    #[error("feature coverage mismatch: {0}")]
    CoverageMismatch(String),
    #[error("confusion matrix is empty")]
    EmptyConfusion,

    // synth / configs
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::EmptyStream => "EmptyStream",
            Error::MissingFile(_) => "MissingFile",
            Error::InvalidLabel(_) => "InvalidLabel",
            Error::DuplicateSampleId(_) => "DuplicateSampleId",
            Error::RecordRejected(_) => "RecordRejected",
            Error::MalformedMetadata(_) => "MalformedMetadata",
            Error::NoInk(_) => "NoInk",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::MissingSample(_) => "MissingSample",
            Error::SingleClassInput => "SingleClassInput",
            Error::NonFiniteInput(_) => "NonFiniteInput",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SchemaVersionMismatch(_) => "SchemaVersionMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::SampleIdMismatch(..) => "SampleIdMismatch",
            Error::TooFewSubjects { .. } => "TooFewSubjects",
            Error::CoverageMismatch(_) => "CoverageMismatch",
            Error::EmptyConfusion => "EmptyConfusion",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
