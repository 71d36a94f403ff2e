use thiserror::Error;

/// Errors raised by the simulation, characterization and mitigation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PecError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown gate label `{0}`")]
    UnknownGate(String),

    #[error("gate `{0}` is not configured on this device")]
    UnconfiguredGate(String),

    #[error("invalid Pauli channel: {0}")]
    InvalidChannel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e}, limit {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("basis cannot represent the target (reconstruction residual {residual:.3e})")]
    DeficientBasis { residual: f64 },

    #[error("selected linear system has rank {rank} < {required} (condition number {condition:.3e})")]
    RankDeficient {
        rank: usize,
        required: usize,
        condition: f64,
    },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),

    #[error("enumeration of {settings} settings exceeds the limit of {limit}")]
    EnumerationTooLarge { settings: u128, limit: u128 },

    #[error("post-selection gave up after {rejections} rejected candidates")]
    PostSelectionExhausted { rejections: u64 },

    #[error("fit did not converge (weighted residual {residual:.3e})")]
    FitFailed { residual: f64 },

    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, PecError>;
