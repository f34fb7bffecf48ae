//! Transformer encoder-decoder that translates feature frames into a
//! sequence of splice-position tokens.

mod checkpoint;
mod config;
mod decode;
pub mod layers;
mod transformer;
pub mod vocab;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting,
    save_checkpoint,
};
pub use config::ModelConfig;
pub use decode::{beam_search, decode_greedy, decode_topn, Hypothesis, DEFAULT_BEAM};
pub use layers::ForwardCtx;
pub use transformer::{Bound, Memory, Model, SourceBatch, TargetBatch};
pub use vocab::{SpliceVocab, TokenSeq};
