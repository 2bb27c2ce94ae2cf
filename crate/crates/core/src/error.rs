use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("non-finite numeric literal `{literal}` in column `{column}`, row {row}")]
    NonFinite {
        column: String,
        row: usize,
        literal: String,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("table has no rows")]
    EmptyTable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate task `{0}`: all labels identical")]
    DegenerateTask(String),
    #[error("no eligible features in dataset `{0}`")]
    NoEligibleFeatures(String),
    #[error("missing metadata: {0}")]
    MissingMetadata(String),
    #[error("unknown template placeholder `${0}$`")]
    UnknownPlaceholder(String),

    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limit persisted after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("upstream returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("mock backend cannot parse prompt: {0}")]
    UnparseablePrompt(String),
    #[error("cache failure: {0}")]
    Cache(String),

    #[error("neither option token present among top logprobs")]
    BothOptionsMissing,
    #[error("could not parse response: {0}")]
    ParseFailure(String),
    #[error("value {0} outside the permitted range")]
    OutOfRange(f64),
    #[error("every row of task `{0}` failed extraction")]
    TaskEmpty(String),

    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("total variance is zero")]
    ZeroTotalVariance,
    #[error("zero variance in predictor")]
    ZeroVariance,
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("non-finite value in input")]
    NonFiniteValue,

    #[error("feature width {got} does not match model width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("task `{0}` cannot be split with both classes on each side")]
    UnsplittableTask(String),

    #[error("{groups} groups cannot fill {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("need at least {needed} tasks, got {got}")]
    TooFewTasks { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
