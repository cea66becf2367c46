//! Sentiment-conditioned caption generation.
//!
//! Two ways of steering an LSTM caption decoder toward a requested
//! sentiment are implemented side by side with a plain baseline:
//! appending a ternary sentiment unit to every step input (direct
//! injection), and carrying a dedicated sentiment cell through the
//! recurrence (sentiment flow). Training, beam-search decoding and
//! BLEU/ROUGE-L/sentiment-percentage evaluation are included, all on a
//! small in-crate reverse-mode differentiation engine.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod trainer;

pub use autodiff::{Gradients, Tape, Tensor, Var};
pub use checkpoint::Checkpoint;
pub use data::{CaptionRecord, RawRecord, Vocabulary};
pub use decoder::{beam_search, greedy_decode, BeamConfig, Caption};
pub use evaluation::{evaluate, EvalReport, Lexicon};
pub use error::{Error, Result};
pub use model::{CaptionModel, ModelConfig, SentimentLabel, Variant};
pub use trainer::{train, train_with, EpochLog, TrainConfig};
