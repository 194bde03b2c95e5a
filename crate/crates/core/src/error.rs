use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("adjacency is not symmetric at ({row}, {col})")]
    AsymmetricAdjacency { row: usize, col: usize },
    #[error("adjacency has a self-loop at region {0}")]
    SelfLoop(usize),
    #[error("region {region} has no reachable neighbours; its weights cannot be normalised")]
    IsolatedRegion { region: String },
    #[error("unknown covariate `{name}`; available: [{}]", available.join(", "))]
    UnknownCovariate {
        name: String,
        available: Vec<String>,
    },
    #[error("lagged counts unavailable at t = {0}")]
    LaggedCountsUnavailable(usize),
    #[error("counts must be nonnegative, got {0}")]
    NegativeCount(i64),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("power iteration did not converge after {0} iterations")]
    PowerIteration(usize),
    #[error("values beyond the observed panel are missing for {what} at times {times:?}")]
    MissingFutureValues { what: String, times: Vec<usize> },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures caused by the inputs rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::PowerIteration(_))
    }
}
