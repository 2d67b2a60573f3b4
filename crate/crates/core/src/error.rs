use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("ray at pixel ({u}, {v}) escaped the layout; geometry is not watertight")]
    RayMiss { u: usize, v: usize },
    #[error("could not place furniture item {item} without overlap after {attempts} attempts")]
    Placement { item: String, attempts: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{endpoint} adapter failed: {message}")]
    Adapter { endpoint: &'static str, message: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: alloc::boxed::Box::new(self),
        }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
