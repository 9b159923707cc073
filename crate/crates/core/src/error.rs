use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the segmentation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown category ids on rows {rows:?}")]
    UnknownCategories { rows: Vec<u64> },

    #[error("at least {required} baskets are needed for the 95% quantile, got {found}")]
    TooFewBaskets { required: usize, found: usize },

    #[error("k = {k} exceeds the number of distinct rows ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("non-finite feature value in row `{entity}`, column {column}")]
    NonFinite { entity: String, column: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("basket `{0}` has no cluster assignment")]
    MissingAssignment(String),

    #[error("clusters {0} and {1} have coincident centers")]
    CoincidentCenters(usize, usize),

    #[error("assignments cover different entity sets ({difference} entities differ)")]
    MismatchedEntities { difference: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
