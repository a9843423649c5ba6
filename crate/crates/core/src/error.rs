use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("total dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("invalid basis label {label:?} for dimensions {dims:?}")]
    InvalidLabel { label: Vec<usize>, dims: Vec<usize> },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("operators do not commute (max commutator entry {deviation:e})")]
    NonCommuting { deviation: f64 },

    #[error("pre- and post-selected states are orthogonal (|overlap| = {overlap:e})")]
    OverlapVanishes { overlap: f64 },

    #[error("post-selection cannot be reached through any outcome")]
    PostSelectionImpossible,

    #[error("pointer wavefunction has vanishing norm")]
    NormVanishes,

    #[error("numerical integration did not converge (achieved error {achieved:e})")]
    IntegrationFailure { achieved: f64 },

    #[error("no pointer width on the grid meets the bias target (best bias {best_bias:e} at width {best_width})")]
    BiasUnreachable { best_bias: f64, best_width: f64 },

    #[error("unknown operator kind `{0}`")]
    UnknownKind(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("bad override: {0}")]
    Override(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
