//! Character-level encoder-decoder trained from scratch.

mod network;
mod sweep;
mod train;
mod vocab;

pub use network::{Dims, Mutation, Params, Tensor, TENSOR_NAMES};
pub use sweep::{parse_grid, run_sweep, Preprocessing, SweepReport, SweepRow};
pub use train::{
    gradient_check, gradient_check_with, train, EncodedExample, GradientCheck, Optimizer,
    Seq2SeqModel, TrainConfig, TrainLog, CHECKPOINT_VERSION,
};
pub use vocab::{build_vocab, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(
        "training diverged at epoch {epoch}, batch {batch}: loss or parameters are not finite"
    )]
    Divergence { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("sweep grid is empty")]
    EmptyGrid,
}
