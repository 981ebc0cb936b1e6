use thiserror::Error;

use qrhawkes::ConfigError;

/// Pipeline stage an analysis error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Validate,
    Ingest,
    Estimate,
    Solve,
    Rank,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Simulate => "simulate",
            Stage::Validate => "validate",
            Stage::Ingest => "ingest",
            Stage::Estimate => "estimate",
            Stage::Solve => "solve",
            Stage::Rank => "rank",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("[{stage}] {message}")]
    Stage { stage: Stage, message: String },
}

impl CliError {
    pub fn stage(stage: Stage, err: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: err.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for analysis failures, 2 for usage, configuration and input errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Stage { .. } => 1,
            _ => 2,
        }
    }
}
