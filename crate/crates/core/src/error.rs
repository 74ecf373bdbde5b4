use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite { what: &'static str, row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid group structure: {0}")]
    Groups(String),

    #[error("invalid sign constraints: {0}")]
    Signs(String),

    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("fit at lambda index {index} failed: {source}")]
    Path {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Table { path: String, line: usize, message: String },

    #[error("{0}")]
    Schema(String),

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("archive: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } | Error::ConstantColumn(_) | Error::Table { .. } => "data",
            Error::InvalidArgument(_) | Error::Groups(_) | Error::Signs(_) => "config",
            Error::Shape(_) | Error::Schema(_) => "shape",
            Error::Divergence { .. } | Error::Path { .. } => "training",
            Error::DegenerateBaseline(_) => "metric",
            Error::Archive(_) | Error::Json(_) => "archive",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
