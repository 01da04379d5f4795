use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A measure, IFS or scan description violates its invariants.
    #[error("invalid input: {0}")]
    Spec(String),

    #[error("invalid word: symbol {symbol} at position {position} is outside 1..={maps}")]
    InvalidWord {
        position: usize,
        symbol: usize,
        maps: usize,
    },

    #[error("enumeration needs {needed} words but the budget is {budget}")]
    BudgetExceeded { needed: f64, budget: u64 },

    #[error("precision: {0}")]
    Precision(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Spec(_) | Error::InvalidWord { .. } | Error::Json { .. } => 2,
            Error::Unsupported(_) => 2,
            Error::BudgetExceeded { .. } => 3,
            Error::Precision(_) => 4,
            Error::Io { .. } | Error::Csv(_) => 1,
        }
    }
}
