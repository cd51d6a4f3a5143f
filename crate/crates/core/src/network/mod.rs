//! The six-layer tagger: token and character embeddings, a character
//! biLSTM summarizing each token's spelling, a token biLSTM over the
//! concatenation, a per-position projection to label scores, and a CRF.

mod model;
mod train;

pub use model::{
    ForwardCache, Hyperparameters, LayerId, NerGradients, NerModel, ParamBlock, ParamBlockMut,
};
pub use train::{
    evaluate, fit, fit_with_scorer, predict_corpus, EarlyStopping, EpochRecord, StopDecision,
    StopReason, TrainingReport,
};
