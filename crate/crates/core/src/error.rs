use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("k = {k} exceeds the number of points n = {n}")]
    TooManyClusters { k: usize, n: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate column `{0}`: zero variance")]
    DegenerateColumn(String),

    #[error("every column is constant, nothing left to cluster")]
    AllColumnsConstant,

    #[error("unseen category `{category}` in column `{column}`")]
    UnseenCategory { column: String, category: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("clusters {0} and {1} have coincident centers")]
    CoincidentCenters(usize, usize),

    #[error("degenerate perfect clustering: within-cluster dispersion is zero")]
    PerfectClustering,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingest failed: {0}")]
    Ingest(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
