use std::path::PathBuf;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A device target lies outside what the ring can realize.
    #[error("{quantity} = {value} is outside the achievable interval [{lo}, {hi}]")]
    Range {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A transfer function denominator collapsed to zero or went negative.
    #[error("non-physical {quantity} at phi = {phi}: denominator {denominator:e}")]
    NonPhysical {
        quantity: &'static str,
        phi: f64,
        denominator: f64,
    },

    /// A caller broke an operation's precondition (shapes, lengths, domains).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Hardware bounds or budgets were violated.
    #[error("configuration error: {0}")]
    Config(String),

    /// A binary input could not be decoded.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// A text record could not be decoded.
    #[error("parse error on line {line}: {message}")]
    ParseLine { line: u64, message: String },

    /// A well-formed document had the wrong structure.
    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: msg.into(),
        }
    }
}
