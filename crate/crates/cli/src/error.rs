use thiserror::Error;

/// Failures of a scenario run. Configuration problems map to exit code 2,
/// pipeline failures to 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model not found: {0}")]
    ModelNotFound(String),
    #[error("{context}: {source}")]
    Pipeline {
        context: String,
        #[source]
        source: glued_core::Error,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::ModelNotFound(_) => 2,
            Self::Pipeline { .. } | Self::Io { .. } => 1,
        }
    }

    pub(crate) fn pipeline(context: impl Into<String>) -> impl FnOnce(glued_core::Error) -> Self {
        let context = context.into();
        move |source| Self::Pipeline { context, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
