use alloc::string::String;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{entity} index {index} out of range (size {len})")]
    IndexOutOfRange {
        entity: &'static str,
        index: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("k-core filtering (user core {user_core}, item core {item_core}) left no interactions")]
    EmptyAfterFiltering { user_core: usize, item_core: usize },
    #[error("user {user} has only {available} candidate negatives, {required} required")]
    NotEnoughNegatives {
        user: usize,
        available: usize,
        required: usize,
    },
    #[error("negative sampling exhausted its attempt budget for user {user}")]
    SamplingExhausted { user: usize },
    #[error("expected {expected} evaluation negatives, got {actual}")]
    WrongNegativeCount { expected: usize, actual: usize },
    #[error("dataset fingerprint mismatch: model {model}, splits {splits}")]
    FingerprintMismatch { model: String, splits: String },
    #[error("non-finite {term} loss at epoch {epoch}, step {step}")]
    NonFiniteLoss {
        term: &'static str,
        epoch: usize,
        step: usize,
    },
    #[error("no evaluation users in the {0} stage")]
    NoEvaluationUsers(&'static str),
    #[error("unresolved template placeholder {{{0}}}")]
    UnresolvedPlaceholder(String),
    #[error("empty search space")]
    EmptySearchSpace,
    #[error("{0}")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;
