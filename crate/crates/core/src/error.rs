use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("singular Fisher information matrix: {0}")]
    SingularFim(String),

    #[error("numerical failure{}: {context}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NumericalFailure { step: Option<usize>, context: String },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag, used on the CLI's stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::SingularGeometry(_) => "singular-geometry",
            Error::SingularFim(_) => "singular-fim",
            Error::NumericalFailure { .. } => "numerical-failure",
            Error::ResourceLimit(_) => "resource-limit",
            Error::Evaluation(_) => "evaluation",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(step: Option<usize>, context: impl Into<String>) -> Self {
        Error::NumericalFailure {
            step,
            context: context.into(),
        }
    }

    /// Attach a step index to a numerical failure that does not carry one yet.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NumericalFailure { step: None, context } => Error::NumericalFailure {
                step: Some(step),
                context,
            },
            other => other,
        }
    }
}
