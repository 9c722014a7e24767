//! Desk-scale contrastive alignment: linear encoders with low-rank adapters,
//! a symmetric InfoNCE objective with an analytic gradient, and
//! train/merge/retrieve over synthetic persona data.

use thiserror::Error;

pub mod data;
pub mod infonce;
pub mod lora;
pub mod train;

pub use data::{write_loss_curve, AlignmentDataset, PersonaRecord, SyntheticConfig};
pub use infonce::{
    infonce_from_similarity, infonce_gradient, infonce_loss, AdapterGradient, AlignmentBatch, Encoder,
    EncoderPair, LossOutput, MergedEncoderPair, PairGradient,
};
pub use lora::{lora_forward, merge_adapter, BaseProjection, LoraAdapter};
pub use train::{
    infer_profile, init_encoders, retrieval_accuracy, train_alignment, AlignmentConfig, CorpusEntry,
    TrainedAlignment,
};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{side} embedding {row} has zero norm")]
    ZeroNorm { side: &'static str, row: usize },
    #[error("{side} embedding {row} is not finite")]
    NonFinite { side: &'static str, row: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("profile corpus is empty")]
    EmptyCorpus,
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}
