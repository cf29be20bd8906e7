use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A mathematical function was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Serial autocorrelation of a constant sequence is undefined.
    #[error("zero variance: sequence is constant, autocorrelation undefined")]
    ZeroVariance,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Record indices are 1-based.
    #[error("record {index}: {message}")]
    Parse { index: usize, message: String },

    #[error("record {index}: timestamp {value} is not after the previous timestamp {previous}")]
    NonMonotone {
        index: usize,
        value: f64,
        previous: f64,
    },

    #[error("input contains no records")]
    Empty,

    #[error("cannot merge accumulators: {0}")]
    Merge(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    /// Wrap the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
