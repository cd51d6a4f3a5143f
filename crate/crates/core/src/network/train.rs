use super::model::NerModel;
use crate::data::{Corpus, EncodedSentence};
use crate::error::{NerError, Result};
use crate::eval::{entity_prf, evaluate_labels, MetricReport};
use crate::math::SeededRng;
use crate::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub stop_reason: StopReason,
}

impl TrainingReport {
    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "epochs_run={}\nbest_epoch={}\nbest_dev_f1={:.6}\nstop_reason={}\n",
            self.epochs.len(),
            self.best_epoch,
            self.best_dev_f1,
            self.stop_reason.as_str()
        );
        for r in &self.epochs {
            out.push_str(&format!(
                "epoch.{}=loss:{:.6},dev_f1:{:.6}\n",
                r.epoch, r.train_loss, r.dev_f1
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a score to maximize. Only strict
/// improvements count, so ties keep the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(NerError::contract("patience must be at least 1"));
        }
        Ok(EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        })
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if score <= b => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

fn encode_labeled(model: &NerModel, c: &Corpus) -> Result<Vec<(EncodedSentence, Vec<usize>)>> {
    c.sentences()
        .map(|s| {
            let enc = model.encode(s)?;
            let gold = enc.label_ids.clone().ok_or_else(|| {
                NerError::LabelMismatch(format!(
                    "train sentence uses a label outside the model's label set {:?}",
                    model.vocab().labels()
                ))
            })?;
            Ok((enc, gold))
        })
        .collect()
}

/// Trains with early stopping on dev entity F1 and restores the best epoch.
pub fn fit(model: &mut NerModel, train: &Corpus, dev: &Corpus, rng: &SeededRng) -> Result<TrainingReport> {
    if dev.num_sentences() == 0 {
        return Err(NerError::contract("fit needs a nonempty dev set"));
    }
    let dev_gold = dev.label_sequences();
    fit_with_scorer(model, train, rng, |m| {
        let pred = predict_corpus(m, dev)?;
        Ok(entity_prf(&dev_gold, &pred)?.f1)
    })
}

/// `fit` with a caller-supplied per-epoch model score in place of dev F1.
pub fn fit_with_scorer<F>(
    model: &mut NerModel,
    train: &Corpus,
    rng: &SeededRng,
    mut score: F,
) -> Result<TrainingReport>
where
    F: FnMut(&NerModel) -> Result<f64>,
{
    if train.num_sentences() == 0 {
        return Err(NerError::contract("fit needs a nonempty train set"));
    }
    let data = encode_labeled(model, train)?;
    let hyper = model.hyper().clone();
    let mut stopper = EarlyStopping::new(hyper.patience)?;
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=hyper.max_epochs {
        rng.fork(&format!("shuffle-{epoch}")).shuffle(&mut order);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let (enc, gold) = &data[i];
            let mut step_rng = rng.fork(&format!("step-{epoch}-{step}"));
            let mut sample = enc.clone();
            model.vocab().replace_singletons(&mut sample.token_ids, &mut step_rng);
            let mut grads = super::NerGradients::zeros_for(model);
            let (loss, _) = model.accumulate_grads(&sample, gold, Mode::Train, &mut step_rng, &mut grads)?;
            model.sgd_step(&mut grads, hyper.learning_rate)?;
            total += loss;
        }
        let dev_f1 = score(model)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / data.len() as f64,
            dev_f1,
        });
        match stopper.observe(epoch, dev_f1) {
            StopDecision::Improved => best.copy_params_from(model),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    model.copy_params_from(&best);
    let (best_epoch, best_dev_f1) = stopper.best().expect("at least one epoch");
    Ok(TrainingReport {
        epochs,
        best_epoch,
        best_dev_f1,
        stop_reason,
    })
}

/// Predicted label strings for every sentence of `c`, in corpus order.
pub fn predict_corpus(model: &NerModel, c: &Corpus) -> Result<Vec<Vec<String>>> {
    c.sentences().map(|s| model.predict(s)).collect()
}

pub fn evaluate(model: &NerModel, c: &Corpus) -> Result<MetricReport> {
    let pred = predict_corpus(model, c)?;
    evaluate_labels(&c.label_sequences(), &pred)
}
