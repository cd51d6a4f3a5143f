//! Transfer learning for clinical de-identification: a character- and
//! token-level biLSTM-CRF tagger, corpus tooling, layer-wise parameter
//! transfer, and span-level evaluation.

pub mod config;
pub mod crf;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod math;
pub mod network;
pub mod transfer;

pub use error::{NerError, Result};

/// Whether a pass is part of training (dropout and singleton UNK replacement
/// active) or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}
