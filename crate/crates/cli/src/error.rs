use std::path::{Path, PathBuf};

use sappkg::deep::DeepError;
use sappkg::ingest::IngestError;
use sappkg::kgbuild::KgError;
use sappkg::kge::KgeError;
use sappkg::kgstats::StatsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing input {}: {what}", path.display())]
    Missing { what: String, path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Shallow(#[from] KgeError),
    #[error(transparent)]
    Deep(#[from] DeepError),
}

impl CliError {
    /// 2 for anything the user can fix in the invocation or config, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Missing { .. } => 2,
            CliError::Shallow(KgeError::Config(_)) | CliError::Deep(DeepError::Config(_)) => 2,
            CliError::Deep(DeepError::Shallow(KgeError::Config(_))) => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn missing(what: impl Into<String>, path: &Path) -> CliError {
        CliError::Missing {
            what: what.into(),
            path: path.to_path_buf(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
