//! Scoring: token accuracy, BIO span extraction, exact-match entity P/R/F1
//! and a type-blind binary PHI view.

use std::collections::HashSet;

use crate::data::split_label;
use crate::error::{NerError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntitySpan {
    pub kind: String,
    /// Inclusive.
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrfScores {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScores {
    /// Derives P/R/F1 from counts with every `0/0` taken as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfScores {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Maximal same-type B/I runs. An `I-X` that does not continue an `X` span
/// opens a new one, as if it were `B-X`.
pub fn extract_spans<S: AsRef<str>>(labels: &[S]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (pos, label) in labels.iter().enumerate() {
        match split_label(label.as_ref()) {
            None => {
                spans.extend(open.take());
            }
            Some((prefix, kind)) => {
                let continues = prefix == 'I' && open.as_ref().is_some_and(|s| s.kind == kind);
                if continues {
                    if let Some(s) = open.as_mut() {
                        s.end = pos + 1;
                    }
                } else {
                    spans.extend(open.take());
                    open = Some(EntitySpan {
                        kind: kind.to_string(),
                        start: pos,
                        end: pos + 1,
                    });
                }
            }
        }
    }
    spans.extend(open);
    spans
}

fn check_aligned<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(NerError::contract(format!(
            "{} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(NerError::contract(format!(
                "sentence {i}: {} gold labels vs {} predicted",
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// Micro-averaged exact-match entity scores over aligned sentences.
pub fn entity_prf<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<PrfScores> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gs: HashSet<EntitySpan> = extract_spans(g).into_iter().collect();
        let ps: HashSet<EntitySpan> = extract_spans(p).into_iter().collect();
        let hit = gs.intersection(&ps).count();
        tp += hit;
        fp += ps.len() - hit;
        fn_ += gs.len() - hit;
    }
    Ok(PrfScores::from_counts(tp, fp, fn_))
}

/// Token-level scores after collapsing every non-`O` label to one PHI class.
pub fn binary_phi_prf<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<PrfScores> {
    check_aligned(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        for (a, b) in g.iter().zip(p) {
            let (ga, pb) = (split_label(a.as_ref()).is_some(), split_label(b.as_ref()).is_some());
            match (ga, pb) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(PrfScores::from_counts(tp, fp, fn_))
}

pub fn token_accuracy<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<f64> {
    check_aligned(gold, pred)?;
    let total: usize = gold.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let hits = gold
        .iter()
        .zip(pred)
        .flat_map(|(g, p)| g.iter().zip(p))
        .filter(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub entity: PrfScores,
    pub binary: PrfScores,
    pub token_accuracy: f64,
    pub sentences: usize,
    pub tokens: usize,
}

pub fn evaluate_labels<G: AsRef<str>, P: AsRef<str>>(gold: &[Vec<G>], pred: &[Vec<P>]) -> Result<MetricReport> {
    Ok(MetricReport {
        entity: entity_prf(gold, pred)?,
        binary: binary_phi_prf(gold, pred)?,
        token_accuracy: token_accuracy(gold, pred)?,
        sentences: gold.len(),
        tokens: gold.iter().map(Vec::len).sum(),
    })
}

impl MetricReport {
    /// `key=value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("sentences", self.sentences.to_string());
        push("tokens", self.tokens.to_string());
        push("token_accuracy", format!("{:.6}", self.token_accuracy));
        for (prefix, s) in [("entity", &self.entity), ("binary", &self.binary)] {
            push(&format!("{prefix}_tp"), s.true_positives.to_string());
            push(&format!("{prefix}_fp"), s.false_positives.to_string());
            push(&format!("{prefix}_fn"), s.false_negatives.to_string());
            push(&format!("{prefix}_precision"), format!("{:.6}", s.precision));
            push(&format!("{prefix}_recall"), format!("{:.6}", s.recall));
            push(&format!("{prefix}_f1"), format!("{:.6}", s.f1));
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "entity_precision,entity_recall,entity_f1,binary_precision,binary_recall,binary_f1,token_accuracy";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.entity.precision,
            self.entity.recall,
            self.entity.f1,
            self.binary.precision,
            self.binary.recall,
            self.binary.f1,
            self.token_accuracy
        )
    }
}
