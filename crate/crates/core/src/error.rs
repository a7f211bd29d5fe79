use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown letter grade `{0}`")]
    UnknownGrade(String),

    #[error("grade points {0} outside [0, 4]")]
    GradeOutOfRange(f64),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("{malformed} of {total} rows malformed (limit {limit:.2}%); first error at {first}")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        limit: f64,
        first: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty training set")]
    EmptyTraining,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("feature selection produced an empty set")]
    EmptySelection,

    #[error("dyad coverage mismatch: {0}")]
    CoverageMismatch(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
