use super::corpus::Corpus;
use crate::error::{NerError, Result};
use crate::math::SeededRng;

/// Share of all notes that forms the official train split.
pub const TRAIN_SHARE: f64 = 0.6;
pub const DEV_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl SplitCorpus {
    /// 60/20/20 split by note order.
    pub fn from_corpus(c: &Corpus) -> Result<Self> {
        let n = c.documents().len();
        let n_train = (n as f64 * TRAIN_SHARE).round() as usize;
        let n_dev = ((n as f64 * DEV_SHARE).round() as usize).min(n - n_train);
        let idx: Vec<usize> = (0..n).collect();
        Ok(SplitCorpus {
            train: c.select(&idx[..n_train])?,
            dev: c.select(&idx[n_train..n_train + n_dev])?,
            test: c.select(&idx[n_train + n_dev..])?,
        })
    }

    pub fn whole(&self) -> Result<Corpus> {
        Corpus::concat(&[&self.train, &self.dev, &self.test])
    }
}

/// Number of train notes kept at `fraction` of the whole dataset, where the
/// full train split corresponds to `TRAIN_SHARE`.
pub fn subsample_size(train_notes: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= TRAIN_SHARE + 1e-12) {
        return Err(NerError::contract(format!(
            "train fraction {fraction} outside (0, {TRAIN_SHARE}]"
        )));
    }
    let exact = fraction / TRAIN_SHARE * train_notes as f64;
    // tolerance keeps e.g. 0.05/0.6*60 = 5.000000000000001 at 5
    let n = (exact - 1e-9).ceil() as usize;
    Ok(n.clamp(1.min(train_notes), train_notes))
}

/// Seeded subset of train notes. All fractions under one seed draw prefixes
/// of the same permutation, so smaller fractions are subsets of larger ones.
pub fn subsample_train(train: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    let n = train.documents().len();
    let keep = subsample_size(n, fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).fork("subsample").shuffle(&mut order);
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();
    train.select(&chosen)
}
