use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] muce_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("refusing to overwrite {0} (pass --force)")]
    Exists(PathBuf),
    #[error("missing prerequisite: {0}")]
    Missing(String),
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("plot error: {0}")]
    Plot(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                muce_core::Error::Dimension(_) => "dimension",
                muce_core::Error::Config(_) => "config",
                muce_core::Error::Domain(_) => "domain",
                muce_core::Error::Usage(_) => "usage",
                muce_core::Error::Training(_) => "training",
                muce_core::Error::Dispatch(_) => "dispatch",
                muce_core::Error::Format { .. } => "format",
                muce_core::Error::Io { .. } => "io",
            },
            CliError::Io { .. } => "io",
            CliError::Exists(_) => "exists",
            CliError::Missing(_) => "missing-prerequisite",
            CliError::Mismatch(_) => "artifact-mismatch",
            CliError::Usage(_) => "usage",
            CliError::Plot(_) => "plot",
        }
    }

    /// One-line JSON object describing the failure.
    pub fn error_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
