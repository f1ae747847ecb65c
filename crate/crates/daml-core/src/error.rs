use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite output produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward root must be a scalar, got {elems} elements")]
    NonScalarRoot { elems: usize },

    #[error("empty sequence passed to {op}")]
    EmptySequence { op: &'static str },

    #[error("all positions masked in {op}")]
    AllMasked { op: &'static str },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("document {doc_id} has no label but a labeled loss was requested")]
    UnlabeledDocument { doc_id: usize },

    #[error("prober outputs missing for mutual-learning objective")]
    MissingProber,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {msg}")]
    Config { msg: String },

    #[error("label {label} out of range 1..={max}")]
    LabelOutOfRange { label: i64, max: u8 },

    #[error("split '{split}' is empty")]
    EmptySplit { split: &'static str },

    #[error("non-finite value during training step {step}: {dump}")]
    NanLoss { step: u64, dump: String },

    #[error("checkpoint format error: {msg}")]
    Checkpoint { msg: String },

    #[error("builder is non-deterministic: two forward evaluations disagree")]
    NonDeterministicBuilder,

    #[error("evaluation requires at least one document")]
    EmptyEvaluation,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
