//! The learned masking policy: token embeddings feeding a stacked
//! bidirectional LSTM, with linear start and end heads over each position.
//!
//! Spans are ranked by `start_logits[i] + end_logits[j]` and deployed either
//! as the single best span or as a uniform draw from the best five.

mod checkpoint;
mod inference;
mod model;
mod train;

use crate::corpus::CorpusError;
use crate::numerics::NumericsError;
use crate::span::Span;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT_VERSION};
pub use inference::{rank_order, select_span, top_k_spans, DeploymentMode, ScoredSpan};
pub use model::{
    batch_loss_and_grads, check_policy_gradients, forward, forward_on_graph, mean_loss, span_loss, span_loss_on_graph, BiLstmLayer,
    BoundPolicy, PolicyDims, PolicyParams,
};
pub use train::{best_epoch, train_policy, EpochRecord, TrainConfig, TrainingLog};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("sequence of {len} tokens exceeds the {max}-token input limit")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    UnknownTokenId { id: u32, vocab_size: usize },
    #[error("span {span:?} out of bounds for length {len}")]
    SpanOutOfBounds { span: Span, len: usize },
    #[error("start logits ({start}) and end logits ({end}) differ in length")]
    LengthMismatch { start: usize, end: usize },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no candidate spans")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint vocabulary hash {expected} does not match vocabulary {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl PolicyError {
    fn with_context(self, epoch: usize, batch: usize) -> Self {
        match self {
            PolicyError::Numerics(NumericsError::NonFinite { .. }) => PolicyError::NonFiniteLoss { epoch, batch },
            other => other,
        }
    }
}
