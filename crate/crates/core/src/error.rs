use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("data file not found: {0}")]
    MissingFile(PathBuf),
    #[error("target column `{0}` not present in header")]
    MissingTarget(String),
    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("no data rows")]
    NoRows,
    #[error("missing target value at line {line}")]
    MissingTargetValue { line: u64 },
    #[error("column `{column}` expected a number at line {line}, found `{value}`")]
    NotNumeric { column: String, line: u64, value: String },
    #[error("target `{target}` has {levels} distinct level(s); {task} needs {needed}")]
    TargetLevels {
        target: String,
        levels: usize,
        task: &'static str,
        needed: &'static str,
    },
    #[error("malformed csv: {0}")]
    Csv(String),
}

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("basis needs at least one function")]
    NoBasisFunctions,
    #[error("knots are not sorted")]
    UnsortedKnots,
    #[error("degenerate range [{min}, {max}]")]
    DegenerateRange { min: f64, max: f64 },
    #[error("difference penalty of order {order} needs dimension > order, got {dim}")]
    PenaltyDimension { order: usize, dim: usize },
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("tensor product width {width} exceeds the limit of {limit}")]
    TooWide { width: usize, limit: usize },
    #[error("empty column")]
    EmptyColumn,
    #[error("df unreachable: requested {df}, limiting trace is {limit}")]
    DfUnreachable { df: f64, limit: f64 },
    #[error("singular normal equations (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported model format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Fit,
    Config,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Load(_) | Error::Schema(_) | Error::ModelFile(_) => ErrorClass::Data,
            Error::Basis(_) | Error::Fit(_) => ErrorClass::Fit,
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Prefix a fit error with the stage it came from.
    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Fit(msg) => Error::Fit(format!("{stage}: {msg}")),
            Error::Basis(e) => Error::Fit(format!("{stage}: {e}")),
            other => other,
        }
    }
}
