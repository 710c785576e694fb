//! Unified organic/sponsored token streams and the autoregressive scorer
//! trained over them.

mod format;
mod scorer;
mod stream;
mod vocab;

pub use format::{read_model, write_model, MAGIC};
pub use scorer::{
    logits, segment_log_probs, sequence_nll, train_scorer, validate_params, CountModel, RandomScorer, Scorer,
};
pub use stream::{flatten, segment, unflatten, TokenStream};
pub use vocab::{SlotKind, Token, TokenKind, Vocabulary, AD, BOS, EOS, ORG};
