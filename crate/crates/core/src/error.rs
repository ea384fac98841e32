//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text file did not match its expected format. `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },

    /// An operation received no usable data (empty file, empty matrix, ...).
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A row could not be normalized because it has zero norm.
    #[error("degenerate vector for token {token:?}: zero norm")]
    DegenerateVector { token: String },

    /// Two matrices that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A parameter is outside its documented range.
    #[error("invalid parameter {name}: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    /// An initial map violated its orthogonality precondition.
    #[error("map is not orthogonal: max|MᵀM - I| = {error:.3e} exceeds epsilon = {epsilon:.3e}")]
    NotOrthogonal { error: f64, epsilon: f64 },

    /// The mutual dictionary came out empty, so there is nothing to fit.
    #[error(
        "refinement impossible: mutual dictionary is empty \
         (forward dictionary: {forward} pairs, backward dictionary: {backward} pairs)"
    )]
    EmptyMutualDictionary { forward: usize, backward: usize },

    /// Every gold source word was out of vocabulary.
    #[error("all {total} gold source words are out of vocabulary")]
    AllOutOfVocabulary { total: usize },

    /// A numerical failure (NaN/Inf) inside the solver.
    #[error("numerical failure at step {step}: {msg}")]
    Numerical { step: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
