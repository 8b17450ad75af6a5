use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("invalid index: {0}")]
    Index(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid input matrix: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("graph has {components} connected components; the Fiedler vector needs a connected graph")]
    Multiplicity { components: usize },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal {off_diag:e})")]
    Convergence { sweeps: usize, off_diag: f64 },
    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for data/contract problems, 3 for numerical
    /// non-convergence. Usage errors (1) are raised by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } => 3,
            Error::Context { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub(crate) fn format_err(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}
