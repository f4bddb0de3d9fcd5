use std::path::PathBuf;

/// Errors surfaced by the training stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: String, detail: String },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode already terminated; call reset first")]
    EpisodeDone,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {what} at line {line}: {detail}")]
    Parse {
        what: String,
        line: usize,
        detail: String,
    },

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot balance a store holding a single label")]
    SingleLabel,

    #[error("reward threshold {threshold} not reached within {steps} steps (best mean {best})")]
    ThresholdNotReached {
        threshold: f64,
        steps: u64,
        best: f64,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for this error: 2 configuration, 3 missing
    /// artifacts, 4 training divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::MissingArtifact { .. } => 3,
            Error::Diverged { .. } | Error::NonFiniteLoss(_) | Error::NonFiniteGradient(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
