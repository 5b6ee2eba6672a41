//! Crate-wide error type.

use thiserror::Error;

/// Byte range into a query string, used to point at syntax errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SourceSpan { start, end }
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("parse error at data row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("syntax error at {span}: {message}")]
    SyntaxError { span: SourceSpan, message: String },

    #[error("validation error: {0}")]
    ValidationError(String),

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    #[error("query is not conjunctive: {0}")]
    NotConjunctive(String),

    #[error("intersection requires matching FROM and SELECT sets: {0}")]
    MismatchedFromOrSelect(String),

    #[error("cannot negate atom: {0}")]
    UnsupportedNegation(String),

    #[error("DNF list exceeds cap of {cap} conjuncts")]
    DnfBlowup { cap: usize },

    #[error("unsupported join atom: {0}")]
    UnsupportedJoin(String),

    #[error("empty column: {0}")]
    EmptyColumn(String),

    #[error("estimator error: {0}")]
    EstimatorError(String),

    #[error("estimator lacks required capability: {0}")]
    CapabilityError(String),

    #[error("featurization error: {0}")]
    FeaturizationError(String),

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {message}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("model format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("invalid generator config: {0}")]
    ConfigError(String),

    #[error("generator gave up: {0}")]
    GenError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
