//! Checkpoints and layer-wise parameter transfer. Transfer only initializes
//! the target; every parameter stays trainable afterwards.

mod checkpoint;
mod plan;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, LayerBlocks, NamedBlock, FORMAT_VERSION, MAGIC,
};
pub use plan::{
    prefix_plans, transfer_from_model, transfer_parameters, LabelDisposition, LabelPolicy,
    LayerOutcome, TransferPlan, TransferReport,
};
