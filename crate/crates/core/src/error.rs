use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A scaling parameter, regime or precondition is outside its valid domain.
    #[error("{0}")]
    Domain(String),
    /// Shapes of parameters, inputs or tables do not agree.
    #[error("dimension mismatch: {0}")]
    Shape(String),
    /// A training step produced a non-finite value.
    #[error("non-finite update in parameter group {group} at step {step}")]
    NonFinite { group: String, step: usize },
    /// A parameter left the configured a-priori bound.
    #[error("parameter bound exceeded in group {group}: {value} > {bound}")]
    Bound { group: String, value: f64, bound: f64 },
    /// A test function was differentiated beyond the supported order.
    #[error("derivative order exhausted: order {requested} exceeds the cap {cap}")]
    DerivativeOrder { requested: usize, cap: usize },
    /// An initialization law is invalid or unsupported for the requested method.
    #[error("invalid law: {0}")]
    Law(String),
    /// Malformed input data (IDX files, CSV, config).
    #[error("format error: {0}")]
    Format(String),
    /// Unknown or malformed configuration entry.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors caused by the environment rather than by the inputs' values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Format(_) | Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
