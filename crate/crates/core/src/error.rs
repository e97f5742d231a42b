use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by data loading, sampling, tree fitting and the run driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: missing value in column `{column}`")]
    MissingCell { row: usize, column: String },

    #[error("row {row}: cannot parse `{value}` in numeric column `{column}`")]
    NumericParse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("class column `{column}` must have exactly two levels, found {found}")]
    ClassLevels { column: String, found: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` has no level `{level}`")]
    UnknownLevel { column: String, level: String },

    #[error("column `{0}` is not categorical")]
    NotCategorical(String),

    #[error("column `{0}` is not numeric")]
    NotNumeric(String),

    #[error("invalid row index set: {0}")]
    InvalidIndex(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("nesting misconfigured: {0}")]
    Nesting(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("balanced accuracy undefined: {0}")]
    UndefinedAccuracy(String),

    #[error("outer repetition {outer}: every inner tree was filtered out")]
    EmptyResult { outer: usize },

    #[error("malformed report: {0}")]
    Report(String),
}

impl Error {
    /// True for errors caused by the input data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::RaggedRow { .. }
                | Error::MissingCell { .. }
                | Error::NumericParse { .. }
                | Error::ClassLevels { .. }
                | Error::UnknownColumn(_)
                | Error::UnknownLevel { .. }
                | Error::NotCategorical(_)
                | Error::NotNumeric(_)
                | Error::Nesting(_)
                | Error::Sampling(_)
                | Error::UndefinedAccuracy(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
