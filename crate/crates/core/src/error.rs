use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the ranking engine and the experiment harness.
#[derive(Debug, Error)]
pub enum LemrError {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Rank correlation is undefined (fewer than two items, or a constant side).
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// The label oracle could not supply a label.
    #[error("label oracle failed on sample {index}: {reason}")]
    Oracle { index: usize, reason: String },

    /// A harness cell failed; carries the (config, budget, split) coordinates.
    #[error("run failed for config {config} at budget {budget} on split {split_id}: {source}")]
    Cell {
        config: String,
        budget: usize,
        split_id: u64,
        #[source]
        source: Box<LemrError>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),
}

impl LemrError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        LemrError::Contract(msg.into())
    }

    /// True when the error is a caller-side contract problem rather than I/O.
    pub fn is_contract(&self) -> bool {
        match self {
            LemrError::Contract(_) | LemrError::UndefinedCorrelation(_) | LemrError::Oracle { .. } => true,
            LemrError::Cell { source, .. } => source.is_contract(),
            LemrError::Format(_) => false,
        }
    }
}

/// On-disk format errors. Each variant has a stable code (see [`FormatError::code`]).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("dimension mismatch in {file}: {detail}")]
    DimensionMismatch { file: String, detail: String },

    #[error("checksum mismatch: manifest says {expected:016x}, payload hashes to {actual:016x}")]
    Checksum { expected: u64, actual: u64 },

    #[error("row sum {sum} out of tolerance at model {model}, sample {sample}")]
    Simplex { model: usize, sample: usize, sum: f64 },

    #[error("label {label} out of range [0, {num_classes}) at sample {sample}")]
    LabelRange { sample: usize, label: i64, num_classes: usize },

    #[error("parse error in {file} line {line}: {detail}")]
    Parse { file: String, line: usize, detail: String },

    #[error("bad binary header in {0}")]
    Header(String),

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::MissingFile(_) => "E_MISSING_FILE",
            FormatError::DimensionMismatch { .. } => "E_DIMENSION",
            FormatError::Checksum { .. } => "E_CHECKSUM",
            FormatError::Simplex { .. } => "E_SIMPLEX",
            FormatError::LabelRange { .. } => "E_LABEL_RANGE",
            FormatError::Parse { .. } => "E_PARSE",
            FormatError::Header(_) => "E_HEADER",
            FormatError::Version(_) => "E_VERSION",
            FormatError::Manifest(_) => "E_MANIFEST",
            FormatError::Io { .. } => "E_IO",
        }
    }
}

pub type Result<T, E = LemrError> = std::result::Result<T, E>;
