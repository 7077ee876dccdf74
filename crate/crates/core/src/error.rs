use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// A propagation produced a non-finite sample. Layers are 1-based; layer
    /// `M + 1` denotes the final half dispersion step.
    #[error("numerical blow-up: non-finite activation at layer {layer}")]
    BlowUp { layer: usize },

    #[error("constellation has no points")]
    EmptyConstellation,

    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),

    #[error("non-finite gradient ({0})")]
    NonFiniteGradient(&'static str),

    #[error("landscape grid has no finite cell")]
    NoFiniteCell,

    #[error("forward tape does not match parameters: {0}")]
    TapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
