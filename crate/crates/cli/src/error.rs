use std::path::{Path, PathBuf};

use comformer_core::fixtures::FixtureError;
use comformer_core::graph::GraphError;
use comformer_core::io::IoError;
use comformer_core::reconstruct::ReconstructError;
use comformer_model::ModelError;
use thiserror::Error;

/// Failures split by exit code: bad input exits 1, a well-formed input whose
/// geometry defeats the pipeline exits 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Domain(_) => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            CliError::Input(m) => CliError::Input(format!("{p}: {m}")),
            CliError::Domain(m) => CliError::Domain(format!("{p}: {m}")),
            io => io,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Disconnected { .. } => CliError::Domain(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ReconstructError> for CliError {
    fn from(e: ReconstructError) -> Self {
        match e {
            ReconstructError::Disconnected(_)
            | ReconstructError::InconsistentPlacement { .. }
            | ReconstructError::LeftHandedSolution
            | ReconstructError::SingularBasis => CliError::Domain(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
