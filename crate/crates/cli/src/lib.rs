//! File-based pipeline stages behind the `shape-concepts` binary.
//!
//! Every stage reads its inputs from and writes its artifacts to one output
//! directory, and records a manifest under `manifests/`.

use std::path::Path;

pub mod artifacts;
pub mod config;
pub mod stages;
pub mod svg;

pub use config::PipelineConfig;
pub use stages::{run_pipeline, run_stage, Stage, StageOptions, Workspace};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("stage `{stage}` needs `{path}`, which does not exist; run the upstream stage first")]
    MissingArtifact { stage: String, path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Core(#[from] shape_concepts::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Artifact {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Io { .. } => "io",
            CliError::Artifact { .. } => "artifact",
            CliError::Core(_) => "computation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            _ => 1,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json_line(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config(keys) => obj["problems"] = serde_json::json!(keys),
            CliError::MissingArtifact { stage, path } => {
                obj["stage"] = serde_json::json!(stage);
                obj["path"] = serde_json::json!(path);
            }
            CliError::Io { path, .. } | CliError::Artifact { path, .. } => obj["path"] = serde_json::json!(path),
            CliError::Core(_) => {}
        }
        obj.to_string()
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

core_from!(
    shape_concepts::GeometryError,
    shape_concepts::DictionaryError,
    shape_concepts::MotifError,
    shape_concepts::TopoError,
    shape_concepts::ConceptError,
    shape_concepts::EvalError,
    shape_concepts::model::ModelError
);
