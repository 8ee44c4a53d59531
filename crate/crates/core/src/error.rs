use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{column}` in {path}")]
    Schema { path: PathBuf, column: String },

    #[error("validation error at row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("raster alignment error: {first} vs {second}")]
    Alignment { first: String, second: String },

    #[error("degenerate area `{0}`: total population is zero")]
    DegenerateArea(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point {index} at ({x}, {y}) lies outside the lattice")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("coverage gap: {0}")]
    CoverageGap(String),

    #[error("design infeasible: stratum `{0}` has too few candidate cells")]
    DesignInfeasible(String),

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("model specification error: {0}")]
    Spec(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
