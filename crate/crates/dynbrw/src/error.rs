use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("family mismatch: {0}")]
    FamilyMismatch(String),
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("step count {n} exceeds depth cap {cap} for exponential-support convolution")]
    DepthCapExceeded { n: usize, cap: usize },
    #[error("degenerate law: {0}")]
    DegenerateLaw(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("node budget {budget} exceeded while generating level {level}")]
    NodeBudgetExceeded { budget: usize, level: usize },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("missing label for edge into node {0}")]
    MissingLabel(u32),
    #[error("no period k <= {k_max} with p^(k)(e,e) m^k > 1; raise k_max or check the regime")]
    NoEmbeddingPeriod { k_max: usize },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("replicate {replicate} (derived seed path replicate/{replicate}): {source}")]
    Replicate {
        replicate: u64,
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn in_replicate(self, replicate: u64) -> Self {
        Error::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}
