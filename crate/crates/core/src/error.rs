use thiserror::Error;

/// Errors surfaced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm below 1e-12, embedding is degenerate")]
    ZeroVector,
    #[error("no embeddings provided")]
    EmptyInput,
    #[error("need at least 2 prototypes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no prototype")]
    MissingPrototype(usize),
    #[error("prototype set is empty")]
    EmptyPrototypes,
    #[error("anchor {0} has no positives; batch is malformed")]
    EmptyPositives(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("iteration {it} outside schedule range [0, {total}]")]
    OutOfRange { it: usize, total: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("style pool is empty")]
    EmptyStylePool,
    #[error("source domain {domain} has no samples of class {class}")]
    EmptyClass { domain: usize, class: usize },
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("degenerate embedding at break-point: {0}")]
    DegenerateEmbedding(String),
    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("non-finite loss at iteration {it} (loss = {loss})")]
    NonFiniteLoss { it: usize, loss: f64 },
    #[error("need at least one known and one unknown record")]
    SingleClass,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
