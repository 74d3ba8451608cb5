use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid gain function: {0}")]
    InvalidGain(String),

    #[error("empty composition chain")]
    EmptyChain,

    #[error("inversion bracket too small: target {y} exceeds g({bracket}) = {g_bracket}")]
    BracketTooSmall { y: f64, bracket: f64, g_bracket: f64 },

    #[error("inversion domain error: {0}")]
    InversionDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty vector list")]
    EmptyList,

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("invalid gain matrix: {0}")]
    InvalidMatrix(String),

    #[error("small-gain precondition not established: {0}")]
    SmallGainNotEstablished(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("finite escape detected at t = {t} (state norm {norm:e})")]
    FiniteEscape { t: f64, norm: f64 },

    #[error("hypothesis (H) violated: {0}")]
    HypothesisViolated(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
