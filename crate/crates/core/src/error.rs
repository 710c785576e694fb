use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate corpus at level {level}: {distinct} distinct points for {required} centroids")]
    DegenerateCorpus { level: usize, distinct: usize, required: usize },

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate semantic id {codes:?}/{disamb} (items {first} and {second})")]
    DuplicateSemanticId { codes: Vec<u16>, disamb: u16, first: u32, second: u32 },

    #[error("inventory has no sponsored items")]
    EmptyInventory,

    #[error("auction has no candidates")]
    NoCandidates,

    #[error("item {0} has no semantic id")]
    MissingId(u32),

    #[error("unknown item {0}")]
    UnknownItem(u32),

    #[error("context position error: {0}")]
    Position(String),

    #[error("no eligible sponsored item available for an ad slot")]
    NoAdAvailable,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("malformed token stream: {0}")]
    Stream(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
