use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("input contains no valid rows ({skipped} malformed rows skipped)")]
    EmptyInput { skipped: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("relation `{0}` has no template and the triple carries no sentence")]
    UnsupportedRelation(String),

    #[error("template integrity: {0}")]
    TemplateIntegrity(String),

    #[error("name pool exhausted: {needed} agents but only {available} names")]
    NamePoolExhausted { needed: usize, available: usize },

    #[error("insufficient distractors: needed {needed}, found {available}")]
    InsufficientDistractors { needed: usize, available: usize },

    #[error("no embedding for node `{0}`")]
    MissingEmbedding(String),

    #[error("cosine similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("duplicate option text `{0}`")]
    DuplicateOption(String),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("model returned invalid probability {prob} for token `{token}`")]
    InvalidProbability { token: String, prob: f64 },

    #[error("contract violation: {0}")]
    Contract(String),
}
