use thiserror::Error;

pub type Result<T> = std::result::Result<T, UhcError>;

#[derive(Debug, Error)]
pub enum UhcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate restriction: subset carries zero probability mass")]
    DegenerateRestriction,

    #[error("classes not covered by any classifier: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl UhcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        UhcError::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, UhcError::Io(_))
    }
}
