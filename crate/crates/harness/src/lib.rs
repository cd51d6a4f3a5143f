//! Command-line tools and experiment drivers for the `deid-core` tagger.

pub mod cli;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod pipeline;

pub use error::{HarnessError, Result};
