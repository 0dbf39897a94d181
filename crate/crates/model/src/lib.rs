//! GN-Transformer encoder over syntax-code graphs, a Transformer decoder,
//! beam search, and the training loop.
//!
//! All arithmetic is `f64`. Gradients come from a small reverse-mode tape
//! ([`tape::Tape`]) that the encoder and decoder record onto.

pub mod beam;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use beam::{beam_search, greedy, Hypothesis, ModelScorer, NextTokenScorer};
pub use checkpoint::Checkpoint;
pub use config::{ApeMode, Config};
pub use decoder::decoder_forward;
pub use encoder::{encoder_forward, AttentionMap, EncoderOutput, Mode};
pub use error::ModelError;
pub use model::{Dims, Model};
pub use optim::Adam;
pub use params::{Grads, ParamId, ParamStore};
pub use train::{evaluate_loss, loss, summarize, train, TrainReport};
