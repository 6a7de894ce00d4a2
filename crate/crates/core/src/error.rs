use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {what} at offset {offset}: {message}")]
    Parse {
        what: &'static str,
        offset: usize,
        message: String,
    },

    /// Scenario validation failure. `path` is a dotted location inside the
    /// scenario document, e.g. `env_protocol.rounds[2].sets[0][1]`.
    #[error("{path}: {message}")]
    Scenario { path: String, message: String },

    #[error("{what} cap exceeded: {count} > {cap}")]
    CapExceeded {
        what: &'static str,
        count: u64,
        cap: u64,
    },

    #[error("time {t} out of range (limit {limit})")]
    OutOfRange { t: usize, limit: usize },

    #[error("unknown proposition `{0}`")]
    UnknownProposition(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("choice not offered by the protocol: {0}")]
    ChoiceNotOffered(String),

    #[error("trace does not match scenario: {0}")]
    TraceMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}
