use std::path::PathBuf;

use slicecast_core::ingest::IngestError;
use slicecast_core::models::ModelError;
use slicecast_core::policy::PolicyError;
use slicecast_core::preprocess::PreprocessError;
use slicecast_core::slicing::SlicingError;
use slicecast_core::telemetry::TelemetryError;
use slicecast_core::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON at `{field}`: {message}")]
    Json {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact {path}; run `slicecast {producer}` first")]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
    #[error("{path} was produced by config {found}, current config is {expected} (use --force to override)")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("replay endpoint: {0}")]
    Replay(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Slicing(#[from] SlicingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
