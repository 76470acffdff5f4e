use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("missing {what} '{}': {reason}", path.display())]
    MissingInput {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Compute(#[from] anyhow::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::MissingInput { .. } => 2,
            CliError::Io { .. } | CliError::Compute(_) => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub fn compute<E: std::error::Error + Send + Sync + 'static>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Compute(anyhow::Error::new(e).context(context.to_string()))
}
