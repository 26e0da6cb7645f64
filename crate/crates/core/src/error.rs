use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong dimension, infeasible starting point, ...
    #[error("input error: {0}")]
    Input(String),

    /// A numeric parameter outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Inconsistent or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative method ran out of iterations. `best` carries the last
    /// iterate when one is available.
    #[error("convergence error: {message}")]
    Convergence {
        message: String,
        best: Option<Vec<f64>>,
    },

    /// A (sub)problem appears to have an empty feasible set.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dimension(what: &str, expected: usize, got: usize) -> Self {
        Error::Input(format!("{what}: expected dimension {expected}, got {got}"))
    }

    pub(crate) fn convergence(message: impl Into<String>, best: Option<Vec<f64>>) -> Self {
        Error::Convergence {
            message: message.into(),
            best,
        }
    }
}
