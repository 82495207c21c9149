use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("space definition: {0}")]
    Space(String),

    #[error("table row {row}: {msg}")]
    Table { row: usize, msg: String },

    #[error("invalid sample: {0}")]
    Sample(String),

    #[error("importance: {0}")]
    Importance(String),

    #[error("clustering: {0}")]
    Cluster(String),

    #[error("model: {0}")]
    Model(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("runlog line {line}: {msg}")]
    RunLog { line: usize, msg: String },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// False only for evaluator failures; everything else traces back to
    /// configuration, inputs or the filesystem.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Evaluation(_))
    }
}
