use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::checkpoint::Checkpoint;
use crate::error::{NerError, Result};
use crate::layers::{BiLstmParams, EmbeddingTable};
use crate::network::{LayerId, NerModel};

/// What to do with Dense and SeqOpt when the label sets differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    RequireIdentical,
    ReinitLabelLayers,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferPlan {
    layers: BTreeSet<LayerId>,
    pub label_policy: LabelPolicy,
}

impl TransferPlan {
    pub fn new(layers: impl IntoIterator<Item = LayerId>, label_policy: LabelPolicy) -> Self {
        TransferPlan {
            layers: layers.into_iter().collect(),
            label_policy,
        }
    }

    pub fn empty() -> Self {
        Self::prefix(0)
    }

    pub fn all() -> Self {
        Self::prefix(LayerId::ALL.len())
    }

    /// The first `n` layers, bottom up.
    pub fn prefix(n: usize) -> Self {
        Self::new(
            LayerId::ALL.iter().copied().take(n),
            LabelPolicy::RequireIdentical,
        )
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.iter().copied()
    }

    pub fn contains(&self, layer: LayerId) -> bool {
        self.layers.contains(&layer)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Length of the plan if it is a bottom-up prefix.
    pub fn prefix_len(&self) -> Option<usize> {
        let n = self.layers.len();
        (*self == Self::prefix(n).with_policy(self.label_policy)).then_some(n)
    }

    pub fn with_policy(mut self, label_policy: LabelPolicy) -> Self {
        self.label_policy = label_policy;
        self
    }
}

impl fmt::Display for TransferPlan {
    /// `none`, or layer names joined by `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.layers.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.layers.iter().map(|l| l.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for TransferPlan {
    type Err = NerError;

    /// Accepts `none`, `all`, `prefix:N`, or a `,`/`+`-separated list of
    /// layer names or 1-based indices.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "" | "none" => return Ok(Self::empty()),
            "all" => return Ok(Self::all()),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("prefix:") {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| NerError::Config(format!("bad prefix length in {s:?}")))?;
            if n > LayerId::ALL.len() {
                return Err(NerError::Config(format!("prefix length {n} exceeds 6")));
            }
            return Ok(Self::prefix(n));
        }
        let layers = s
            .split([',', '+'])
            .map(str::parse)
            .collect::<Result<Vec<LayerId>>>()?;
        Ok(Self::new(layers, LabelPolicy::RequireIdentical))
    }
}

/// Plans ∅, {1}, {1,2}, ..., {1..6}.
pub fn prefix_plans() -> Vec<TransferPlan> {
    (0..=LayerId::ALL.len()).map(TransferPlan::prefix).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOutcome {
    Transferred,
    PartiallyTransferred,
    Reinitialized,
}

impl LayerOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerOutcome::Transferred => "transferred",
            LayerOutcome::PartiallyTransferred => "partially_transferred",
            LayerOutcome::Reinitialized => "reinitialized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelDisposition {
    /// Neither label layer was in the plan.
    NotPlanned,
    /// Label sets matched; planned label layers were copied.
    Copied,
    /// Label sets differed; planned label layers kept their fresh initialization.
    Reinitialized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub plan: TransferPlan,
    /// One entry per layer, in `LayerId` order.
    pub outcomes: Vec<(LayerId, LayerOutcome)>,
    pub token_rows_transferred: usize,
    pub token_rows_reinitialized: usize,
    pub char_rows_transferred: usize,
    pub char_rows_reinitialized: usize,
    pub labels: LabelDisposition,
}

impl TransferReport {
    pub fn outcome(&self, layer: LayerId) -> LayerOutcome {
        self.outcomes[usize::from(layer.index()) - 1].1
    }

    pub fn to_key_values(&self) -> String {
        let mut out = format!("plan={}\nvocab_policy=overlap_remap\n", self.plan);
        for (l, o) in &self.outcomes {
            out.push_str(&format!("layer.{l}={}\n", o.as_str()));
        }
        out.push_str(&format!(
            "token_rows_transferred={}\ntoken_rows_reinitialized={}\n\
             char_rows_transferred={}\nchar_rows_reinitialized={}\nlabel_layers={}\n",
            self.token_rows_transferred,
            self.token_rows_reinitialized,
            self.char_rows_transferred,
            self.char_rows_reinitialized,
            match self.labels {
                LabelDisposition::NotPlanned => "not_planned",
                LabelDisposition::Copied => "copied",
                LabelDisposition::Reinitialized => "reinitialized",
            }
        ));
        out
    }
}

/// Target row → source row for every target entry whose surface also exists
/// in the source. The two reserved rows always map to each other.
fn row_map(source: &[String], target: &[String], lookup: impl Fn(&str) -> Option<usize>) -> Vec<Option<usize>> {
    debug_assert!(source.len() >= 2);
    target
        .iter()
        .enumerate()
        .map(|(i, surface)| if i < 2 { Some(i) } else { lookup(surface) })
        .collect()
}

fn copy_rows(src: &EmbeddingTable, dst: &mut EmbeddingTable, map: &[Option<usize>]) -> usize {
    let mut n = 0;
    for (t, s) in map.iter().enumerate() {
        if let Some(s) = *s {
            dst.matrix_mut().row_mut(t).copy_from_slice(src.row(s));
            n += 1;
        }
    }
    n
}

fn same_shape(a: &BiLstmParams, b: &BiLstmParams) -> bool {
    a.directions() == b.directions() && a.in_dim() == b.in_dim() && a.hidden() == b.hidden()
}

fn dims_check(source: &NerModel, target: &NerModel, plan: &TransferPlan) -> Result<()> {
    let (s, t) = (source.hyper(), target.hyper());
    for layer in plan.layers() {
        let ok = match layer {
            LayerId::TokenEmb => s.token_emb_dim == t.token_emb_dim,
            LayerId::CharEmb => s.char_emb_dim == t.char_emb_dim,
            LayerId::CharLstm => same_shape(source.char_lstm(), target.char_lstm()),
            LayerId::TokenLstm => same_shape(source.token_lstm(), target.token_lstm()),
            LayerId::Dense => source.dense().w.cols() == target.dense().w.cols(),
            LayerId::SeqOpt => true,
        };
        if !ok {
            return Err(NerError::contract(format!(
                "cannot transfer {layer}: source and target dimensions differ"
            )));
        }
    }
    Ok(())
}

/// Initializes `target` from `source` for the layers in `plan`. Everything
/// is validated before any parameter is written, so on error `target` is
/// untouched.
pub fn transfer_from_model(source: &NerModel, target: &mut NerModel, plan: &TransferPlan) -> Result<TransferReport> {
    dims_check(source, target, plan)?;
    let labels_match = source.vocab().labels() == target.vocab().labels();
    let plans_labels = plan.contains(LayerId::Dense) || plan.contains(LayerId::SeqOpt);
    if plans_labels && !labels_match && plan.label_policy == LabelPolicy::RequireIdentical {
        return Err(NerError::LabelMismatch(format!(
            "source labels {:?} vs target labels {:?}",
            source.vocab().labels(),
            target.vocab().labels()
        )));
    }

    let sv = source.vocab();
    let tv = target.vocab();
    let token_total = tv.num_tokens();
    let char_total = tv.num_chars();
    let token_map = row_map(sv.tokens(), tv.tokens(), |s| sv.lookup_token(s));
    let char_map = row_map(sv.chars(), tv.chars(), |s| sv.lookup_char(s));

    let mut outcomes = Vec::with_capacity(6);
    let (mut tok_moved, mut char_moved) = (0, 0);
    for layer in LayerId::ALL {
        let outcome = if !plan.contains(layer) {
            LayerOutcome::Reinitialized
        } else {
            match layer {
                LayerId::TokenEmb => {
                    tok_moved = copy_rows(&source.token_emb, &mut target.token_emb, &token_map);
                    partial(tok_moved, token_total)
                }
                LayerId::CharEmb => {
                    char_moved = copy_rows(&source.char_emb, &mut target.char_emb, &char_map);
                    partial(char_moved, char_total)
                }
                LayerId::CharLstm => {
                    target.char_lstm = source.char_lstm.clone();
                    LayerOutcome::Transferred
                }
                LayerId::TokenLstm => {
                    target.token_lstm = source.token_lstm.clone();
                    LayerOutcome::Transferred
                }
                LayerId::Dense if labels_match => {
                    target.dense = source.dense.clone();
                    LayerOutcome::Transferred
                }
                LayerId::SeqOpt if labels_match => {
                    target.transitions = source.transitions.clone();
                    LayerOutcome::Transferred
                }
                LayerId::Dense | LayerId::SeqOpt => LayerOutcome::Reinitialized,
            }
        };
        outcomes.push((layer, outcome));
    }
    Ok(TransferReport {
        plan: plan.clone(),
        outcomes,
        token_rows_transferred: tok_moved,
        token_rows_reinitialized: token_total - tok_moved,
        char_rows_transferred: char_moved,
        char_rows_reinitialized: char_total - char_moved,
        labels: match (plans_labels, labels_match) {
            (false, _) => LabelDisposition::NotPlanned,
            (true, true) => LabelDisposition::Copied,
            (true, false) => LabelDisposition::Reinitialized,
        },
    })
}

fn partial(moved: usize, total: usize) -> LayerOutcome {
    match moved {
        0 => LayerOutcome::Reinitialized,
        m if m == total => LayerOutcome::Transferred,
        _ => LayerOutcome::PartiallyTransferred,
    }
}

pub fn transfer_parameters(source: &Checkpoint, target: &mut NerModel, plan: &TransferPlan) -> Result<TransferReport> {
    let model = source.to_model()?;
    transfer_from_model(&model, target, plan)
}
