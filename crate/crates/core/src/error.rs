use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the tuning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("insufficient rows: have {rows}, need more than {needed}")]
    InsufficientRows { rows: usize, needed: usize },

    #[error("column `{0}` cannot be scaled (latency is never scaled)")]
    ScalerScope(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid cluster count k={k} for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("cluster degeneracy: {0}")]
    ClusterDegeneracy(String),

    #[error("silhouette is undefined for fewer than two clusters")]
    UndefinedSilhouette,

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid regression target: {0}")]
    InvalidTarget(String),

    #[error("shape mismatch: expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("MAPE is undefined when a true value is zero")]
    UndefinedMape,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unknown key `{0}`")]
    Key(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}{}: {source}", workload.as_ref().map(|w| format!(" [workload {w}]")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        workload: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage (and workload) it came from.
    pub fn in_stage(self, stage: &'static str, workload: Option<&str>) -> Self {
        Error::Stage {
            stage,
            workload: workload.map(str::to_owned),
            source: Box::new(self),
        }
    }
}
