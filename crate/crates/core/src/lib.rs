//! Spliced-speech forgery generation and splice localization.
//!
//! The crate covers the full loop: synthesize forgeries with exact ground
//! truth ([`forgery`]), turn audio into model inputs ([`features`]), train a
//! Transformer sequence-to-sequence detector ([`model`], [`training`]) and
//! score its predictions ([`metrics`]).

pub mod audio;
pub mod cli;
pub mod error;
pub mod features;
pub mod forgery;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
