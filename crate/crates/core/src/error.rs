use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("negative table entry {table}({c},{n}) = {value:e}")]
    NegativeEntry {
        table: &'static str,
        c: usize,
        n: usize,
        value: f64,
    },

    #[error("table cache rejected: {0}")]
    Cache(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation problems map to exit code 2, numerical ones to 3.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NegativeEntry { .. } | Error::Numerical(_))
    }
}
