//! Neural bag-of-words classifier for the offensive and stance tasks.
//!
//! Utterances are pooled word embeddings; a three-layer ReLU perceptron maps
//! the utterance vector (offensive) or the pair feature
//! `h_i ⊕ h_j ⊕ (h_i − h_j) ⊕ (h_i ⊙ h_j)` (stance) to class logits.
//! Gradients are written out by hand and verified by [`gradcheck`].

pub mod checkpoint;
pub mod embedding;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod train;

use thiserror::Error;

pub use embedding::{encode_utterance, tokenize, EmbeddingTable, OovPolicy, PretrainedVectors};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use loss::{cb_focal, class_balanced_weight, cross_entropy, focal_term, weighted_cross_entropy, LossConfig};
pub use mlp::{forward, Dense, MlpParams};
pub use model::{stance_features, Encoded, ExampleInput, LabeledExample, ModelConfig, NbowModel, Origin, Pooling};
pub use train::{
    build_model, class_counts, examples_from_gold, split_70_15_15, train, CheckpointMetric, EpochStats, TrainConfig,
    TrainOutcome,
};

#[derive(Debug, Error)]
pub enum NbowError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    DivergenceDetected { epoch: usize, step: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
