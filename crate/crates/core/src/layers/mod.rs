//! Parametric feed-forward components below the sequence layer.

mod dense;
mod embedding;
mod lstm;

pub use dense::DenseParams;
pub use embedding::{EmbeddingTable, SparseRowGrad, PAD_ID, UNK_ID};
pub use lstm::{
    bilstm_backward, bilstm_sequence, lstm_step, lstm_step_backward, BiLstmCache, BiLstmParams,
    Gate, LstmParams, SequenceMode, StepCache, FORGET_BIAS_INIT,
};

