//! Label prediction (token bi-LSTM and emission projection) and label
//! sequence optimization (linear-chain CRF).

mod checkpoint;
mod crf;
mod model;

use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::nn::NnError;

pub use checkpoint::{CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use crf::{
    log_partition, marginals, nll_loss, nll_with_gradient, path_score, repair_bio, viterbi,
    EmissionScores, LabelSet, Marginals, NllGradient, TransitionMatrix, ViterbiPath,
};
pub use model::{crf_nll, Model, ModelLayers, TagSequence};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad label: {0}")]
    Label(String),
    #[error("feature schema hash {found} does not match the model's {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}
