use alloc::string::String;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite {term} at epoch {epoch}, batch {batch}")]
    Divergence {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("empty utterance: every frame is below the silence threshold")]
    EmptyUtterance,
    #[error("input too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("empty score set for {0}")]
    EmptyClass(&'static str),
    #[error("ASV operating point incompatible with t-DCF: C1 = {c1}, C2 = {c2}")]
    IncompatibleOperatingPoint { c1: f64, c2: f64 },
    #[error("batch normalisation in training mode needs a batch of at least 2")]
    BatchTooSmall,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(
    op: &'static str,
    expected: impl core::fmt::Debug,
    got: impl core::fmt::Debug,
) -> Error {
    Error::Shape {
        op,
        expected: alloc::format!("{expected:?}"),
        got: alloc::format!("{got:?}"),
    }
}
