use thiserror::Error;

/// Errors raised by the numerics in this crate.
///
/// Hypothesis violations that the theory treats as "flag, don't refuse"
/// are reported through result flags instead of this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RinglabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("detectability failure: {0}")]
    Detectability(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("logarithm branch failure: {0}")]
    Branch(String),

    #[error("repeated interpolation nodes (minimal separation {0:e})")]
    RepeatedNodes(f64),

    #[error("window normalizer vanishes: target node is zero")]
    ZeroNormalizer,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("coalesced nodes: {0}")]
    Coalesced(String),

    #[error("contour error: {0}")]
    Contour(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("inversion error: {0}")]
    Inversion(String),

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, RinglabError>;
