//! The one training path shared by the CLI commands and the experiment grid,
//! so a grid row can be reproduced exactly with `train` / `transfer-train`.

use deid_core::data::{build_vocabulary, Corpus};
use deid_core::math::SeededRng;
use deid_core::network::{fit, Hyperparameters, NerModel, TrainingReport};
use deid_core::transfer::{transfer_from_model, TransferPlan, TransferReport};
use deid_core::Result;

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: NerModel,
    pub report: TrainingReport,
    pub transfer: Option<TransferReport>,
}

/// Builds a model over `train`'s vocabulary, optionally initializes it from
/// `source` under `plan`, and fits it with early stopping on `dev`.
///
/// All randomness derives from `seed`: the model is initialized from the
/// `init` fork and trained from the `fit` fork. The label set is the union
/// of both corpora's inventories.
pub fn train_model(
    hyper: &Hyperparameters,
    train: &Corpus,
    dev: &Corpus,
    seed: u64,
    source: Option<(&NerModel, &TransferPlan)>,
) -> Result<Trained> {
    let hyper = Hyperparameters {
        seed,
        ..hyper.clone()
    };
    let labeled = train.widen_inventory(dev.inventory())?;
    let vocab = build_vocabulary(&labeled, hyper.min_token_freq)?;
    let rng = SeededRng::new(seed);
    let mut model = NerModel::new(vocab, hyper, &rng.fork("init"))?;
    let transfer = match source {
        Some((src, plan)) => Some(transfer_from_model(src, &mut model, plan)?),
        None => None,
    };
    let report = fit(&mut model, train, dev, &rng.fork("fit"))?;
    Ok(Trained {
        model,
        report,
        transfer,
    })
}
