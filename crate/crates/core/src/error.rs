use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration (head/objective mismatch, unknown keys, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data. `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// No score form satisfies the sign constraints for the fitted Tweedie indices.
    #[error(
        "no feasible score form: fitted b = {b_all:.4} (all claims), {b_plus:.4} (large claims), \
         {b_minus:.4} (small claims); need b_minus > 1 or b_plus < 1"
    )]
    Infeasible { b_all: f64, b_plus: f64, b_minus: f64 },

    /// Training diverged or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the caller's input rather than by the library.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
