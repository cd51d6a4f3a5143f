use std::fmt;
use std::str::FromStr;

use crate::config::ConfigEntry;
use crate::crf::{log_partition, nll_and_gradients, path_score, viterbi_decode, EmissionLattice, TransitionTable};
use crate::data::{EncodedSentence, Sentence, Vocabulary};
use crate::error::{NerError, Result};
use crate::layers::{
    bilstm_backward, bilstm_sequence, BiLstmCache, BiLstmParams, DenseParams, EmbeddingTable,
    SequenceMode, SparseRowGrad,
};
use crate::math::{axpy, clip_global_norm, RealMatrix, RealVector, SeededRng};
use crate::Mode;

/// The six parameter groups, bottom to top. The discriminant order is the
/// order in which layer-prefix transfer plans grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerId {
    TokenEmb = 1,
    CharEmb = 2,
    CharLstm = 3,
    TokenLstm = 4,
    Dense = 5,
    SeqOpt = 6,
}

impl LayerId {
    pub const ALL: [LayerId; 6] = [
        LayerId::TokenEmb,
        LayerId::CharEmb,
        LayerId::CharLstm,
        LayerId::TokenLstm,
        LayerId::Dense,
        LayerId::SeqOpt,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<LayerId> {
        LayerId::ALL.get(usize::from(i).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerId::TokenEmb => "token_emb",
            LayerId::CharEmb => "char_emb",
            LayerId::CharLstm => "char_lstm",
            LayerId::TokenLstm => "token_lstm",
            LayerId::Dense => "dense",
            LayerId::SeqOpt => "seq_opt",
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerId {
    type Err = NerError;

    /// Accepts a layer name or its 1-based index.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<u8>() {
            return LayerId::from_index(i).ok_or_else(|| NerError::Config(format!("no layer {i}")));
        }
        LayerId::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| NerError::Config(format!("unknown layer {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub token_emb_dim: usize,
    pub char_emb_dim: usize,
    /// Per direction.
    pub char_lstm_hidden: usize,
    /// Per direction.
    pub token_lstm_hidden: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub bidirectional: bool,
    pub min_token_freq: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            token_emb_dim: 100,
            char_emb_dim: 25,
            char_lstm_hidden: 25,
            token_lstm_hidden: 100,
            learning_rate: 0.005,
            dropout_rate: 0.5,
            grad_clip_norm: 5.0,
            max_epochs: 100,
            patience: 10,
            seed: 1,
            bidirectional: true,
            min_token_freq: 1,
        }
    }
}

impl Hyperparameters {
    pub const KEYS: [&'static str; 12] = [
        "token_emb_dim",
        "char_emb_dim",
        "char_lstm_hidden",
        "token_lstm_hidden",
        "learning_rate",
        "dropout_rate",
        "grad_clip_norm",
        "max_epochs",
        "patience",
        "seed",
        "bidirectional",
        "min_token_freq",
    ];

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.token_emb_dim,
            self.char_emb_dim,
            self.char_lstm_hidden,
            self.token_lstm_hidden,
        ];
        if dims.contains(&0) {
            return Err(NerError::Config("layer dimensions must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(NerError::Config(format!("bad learning_rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NerError::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(NerError::Config(format!("bad grad_clip_norm {}", self.grad_clip_norm)));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(NerError::Config("patience and max_epochs must be at least 1".into()));
        }
        if self.min_token_freq == 0 {
            return Err(NerError::Config("min_token_freq must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` entry. Returns `Ok(false)` for keys that are
    /// not hyperparameters so callers can handle their own keys.
    pub fn apply(&mut self, e: &ConfigEntry) -> Result<bool> {
        match e.key.as_str() {
            "token_emb_dim" => self.token_emb_dim = e.parse()?,
            "char_emb_dim" => self.char_emb_dim = e.parse()?,
            "char_lstm_hidden" => self.char_lstm_hidden = e.parse()?,
            "token_lstm_hidden" => self.token_lstm_hidden = e.parse()?,
            "learning_rate" => self.learning_rate = e.parse()?,
            "dropout_rate" => self.dropout_rate = e.parse()?,
            "grad_clip_norm" => self.grad_clip_norm = e.parse()?,
            "max_epochs" => self.max_epochs = e.parse()?,
            "patience" => self.patience = e.parse()?,
            "seed" => self.seed = e.parse()?,
            "bidirectional" => self.bidirectional = e.parse()?,
            "min_token_freq" => self.min_token_freq = e.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of the concatenated `[token embedding; char summary]` vector.
    pub fn token_lstm_in_dim(&self) -> usize {
        self.token_emb_dim + self.directions() * self.char_lstm_hidden
    }

    pub fn dense_in_dim(&self) -> usize {
        self.directions() * self.token_lstm_hidden
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "token_emb_dim={}\nchar_emb_dim={}\nchar_lstm_hidden={}\ntoken_lstm_hidden={}\n\
             learning_rate={}\ndropout_rate={}\ngrad_clip_norm={}\nmax_epochs={}\npatience={}\n\
             seed={}\nbidirectional={}\nmin_token_freq={}\n",
            self.token_emb_dim,
            self.char_emb_dim,
            self.char_lstm_hidden,
            self.token_lstm_hidden,
            self.learning_rate,
            self.dropout_rate,
            self.grad_clip_norm,
            self.max_epochs,
            self.patience,
            self.seed,
            self.bidirectional,
            self.min_token_freq
        )
    }
}

/// A read-only view of one named parameter array.
#[derive(Debug, Clone, Copy)]
pub struct ParamBlock<'a> {
    pub layer: LayerId,
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct ParamBlockMut<'a> {
    pub layer: LayerId,
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
}

const LSTM_BLOCK_NAMES: [[&str; 3]; 2] = [["fwd.w", "fwd.u", "fwd.b"], ["bwd.w", "bwd.u", "bwd.b"]];

fn lstm_slices(p: &BiLstmParams) -> Vec<&[f64]> {
    std::iter::once(&p.fwd)
        .chain(p.bwd.as_ref())
        .flat_map(|d| [d.w.as_slice(), d.u.as_slice(), d.b.as_slice()])
        .collect()
}

fn lstm_shapes(p: &BiLstmParams) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for d in std::iter::once(&p.fwd).chain(p.bwd.as_ref()) {
        out.push(d.w.shape());
        out.push(d.u.shape());
        out.push((d.b.len(), 1));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerModel {
    vocab: Vocabulary,
    hyper: Hyperparameters,
    pub(crate) token_emb: EmbeddingTable,
    pub(crate) char_emb: EmbeddingTable,
    pub(crate) char_lstm: BiLstmParams,
    pub(crate) token_lstm: BiLstmParams,
    pub(crate) dense: DenseParams,
    pub(crate) transitions: TransitionTable,
}

/// Intermediates from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    token_ids: Vec<usize>,
    char_ids: Vec<Vec<usize>>,
    char_caches: Vec<BiLstmCache>,
    /// Inverted-dropout scale per coordinate of the token LSTM input; `None` when no dropout.
    mask: Option<Vec<Vec<f64>>>,
    token_cache: BiLstmCache,
    hidden: Vec<RealVector>,
}

impl ForwardCache {
    pub fn dropout_mask(&self) -> Option<&[Vec<f64>]> {
        self.mask.as_deref()
    }

    /// Token LSTM inputs after dropout.
    pub fn token_lstm_inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.token_cache.fwd.iter().map(|c| c.x.as_slice())
    }
}

/// Gradients for every parameter group; embedding gradients are row-sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct NerGradients {
    pub token_emb: SparseRowGrad,
    pub char_emb: SparseRowGrad,
    pub char_lstm: BiLstmParams,
    pub token_lstm: BiLstmParams,
    pub dense: DenseParams,
    pub transitions: RealMatrix,
}

impl NerGradients {
    pub fn zeros_for(model: &NerModel) -> Self {
        NerGradients {
            token_emb: SparseRowGrad::new(model.token_emb.dim()),
            char_emb: SparseRowGrad::new(model.char_emb.dim()),
            char_lstm: model.char_lstm.zeros_like(),
            token_lstm: model.token_lstm.zeros_like(),
            dense: model.dense.zeros_like(),
            transitions: RealMatrix::zeros(model.transitions.matrix().rows(), model.transitions.matrix().cols()),
        }
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.token_emb.blocks_mut().collect();
        v.extend(self.char_emb.blocks_mut());
        v.extend(self.char_lstm.blocks_mut());
        v.extend(self.token_lstm.blocks_mut());
        v.push(self.dense.w.as_mut_slice());
        v.push(self.dense.b.as_mut_slice());
        v.push(self.transitions.as_mut_slice());
        v
    }

    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for (_, r) in self.token_emb.iter().chain(self.char_emb.iter()) {
            sq += r.iter().map(|x| x * x).sum::<f64>();
        }
        for b in lstm_slices(&self.char_lstm).into_iter().chain(lstm_slices(&self.token_lstm)) {
            sq += b.iter().map(|x| x * x).sum::<f64>();
        }
        sq += self.dense.w.as_slice().iter().map(|x| x * x).sum::<f64>();
        sq += self.dense.b.norm_squared();
        sq += self.transitions.as_slice().iter().map(|x| x * x).sum::<f64>();
        sq.sqrt()
    }

    /// Dense copies laid out exactly like `NerModel::blocks`.
    pub fn dense_blocks(&self, model: &NerModel) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (grad, table) in [(&self.token_emb, &model.token_emb), (&self.char_emb, &model.char_emb)] {
            let mut d = vec![0.0; table.vocab_size() * table.dim()];
            for (row, g) in grad.iter() {
                d[row * table.dim()..(row + 1) * table.dim()].copy_from_slice(g);
            }
            out.push(d);
        }
        for p in [&self.char_lstm, &self.token_lstm] {
            out.extend(lstm_slices(p).into_iter().map(<[f64]>::to_vec));
        }
        out.push(self.dense.w.as_slice().to_vec());
        out.push(self.dense.b.to_vec());
        out.push(self.transitions.as_slice().to_vec());
        out
    }
}

impl NerModel {
    /// Fresh model over `vocab`. Each group draws from its own fork of `rng`,
    /// so a group's initialization does not depend on the others' sizes.
    pub fn new(vocab: Vocabulary, hyper: Hyperparameters, rng: &SeededRng) -> Result<Self> {
        hyper.validate()?;
        let k = vocab.num_labels();
        let token_emb = EmbeddingTable::new(
            "token",
            vocab.num_tokens(),
            hyper.token_emb_dim,
            &mut rng.fork("token_emb"),
        );
        let char_emb = EmbeddingTable::new("char", vocab.num_chars(), hyper.char_emb_dim, &mut rng.fork("char_emb"));
        let char_lstm = BiLstmParams::new(
            hyper.char_emb_dim,
            hyper.char_lstm_hidden,
            hyper.bidirectional,
            &mut rng.fork("char_lstm"),
        );
        let token_lstm = BiLstmParams::new(
            hyper.token_lstm_in_dim(),
            hyper.token_lstm_hidden,
            hyper.bidirectional,
            &mut rng.fork("token_lstm"),
        );
        let dense = DenseParams::new(hyper.dense_in_dim(), k, &mut rng.fork("dense"));
        let transitions = TransitionTable::zeros(k);
        Ok(NerModel {
            vocab,
            hyper,
            token_emb,
            char_emb,
            char_lstm,
            token_lstm,
            dense,
            transitions,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    /// Training-schedule fields (learning rate, dropout, patience, ...) may
    /// change freely; architecture fields may not.
    pub fn set_hyper(&mut self, hyper: Hyperparameters) -> Result<()> {
        hyper.validate()?;
        let h = &self.hyper;
        if (hyper.token_emb_dim, hyper.char_emb_dim, hyper.char_lstm_hidden, hyper.token_lstm_hidden, hyper.bidirectional)
            != (h.token_emb_dim, h.char_emb_dim, h.char_lstm_hidden, h.token_lstm_hidden, h.bidirectional)
        {
            return Err(NerError::contract("architecture hyperparameters cannot change"));
        }
        self.hyper = hyper;
        Ok(())
    }

    pub fn token_embeddings(&self) -> &EmbeddingTable {
        &self.token_emb
    }

    pub fn char_embeddings(&self) -> &EmbeddingTable {
        &self.char_emb
    }

    pub fn char_lstm(&self) -> &BiLstmParams {
        &self.char_lstm
    }

    pub fn token_lstm(&self) -> &BiLstmParams {
        &self.token_lstm
    }

    pub fn dense(&self) -> &DenseParams {
        &self.dense
    }

    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }

    /// Every parameter array in a fixed order: layers bottom to top, and
    /// within a layer the order listed in `block_names`.
    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        for (layer, t) in [(LayerId::TokenEmb, &self.token_emb), (LayerId::CharEmb, &self.char_emb)] {
            let (rows, cols) = t.matrix().shape();
            out.push(ParamBlock {
                layer,
                name: "table",
                rows,
                cols,
                data: t.matrix().as_slice(),
            });
        }
        for (layer, p) in [(LayerId::CharLstm, &self.char_lstm), (LayerId::TokenLstm, &self.token_lstm)] {
            let shapes = lstm_shapes(p);
            let dirs = std::iter::once(&p.fwd).chain(p.bwd.as_ref());
            for (d, (names, dir)) in LSTM_BLOCK_NAMES.iter().zip(dirs).enumerate() {
                let datas = [dir.w.as_slice(), dir.u.as_slice(), dir.b.as_slice()];
                for (j, data) in datas.into_iter().enumerate() {
                    let (rows, cols) = shapes[3 * d + j];
                    out.push(ParamBlock {
                        layer,
                        name: names[j],
                        rows,
                        cols,
                        data,
                    });
                }
            }
        }
        let (rows, cols) = self.dense.w.shape();
        out.push(ParamBlock {
            layer: LayerId::Dense,
            name: "w",
            rows,
            cols,
            data: self.dense.w.as_slice(),
        });
        out.push(ParamBlock {
            layer: LayerId::Dense,
            name: "b",
            rows: self.dense.b.len(),
            cols: 1,
            data: self.dense.b.as_slice(),
        });
        let m = self.transitions.matrix();
        out.push(ParamBlock {
            layer: LayerId::SeqOpt,
            name: "transitions",
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice(),
        });
        out
    }

    /// Mutable counterpart of `blocks`, same order.
    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let char_shapes = lstm_shapes(&self.char_lstm);
        let token_shapes = lstm_shapes(&self.token_lstm);
        let mut out = Vec::new();
        for (layer, t) in [
            (LayerId::TokenEmb, &mut self.token_emb),
            (LayerId::CharEmb, &mut self.char_emb),
        ] {
            let (rows, cols) = t.matrix().shape();
            out.push(ParamBlockMut {
                layer,
                name: "table",
                rows,
                cols,
                data: t.matrix_mut().as_mut_slice(),
            });
        }
        for (layer, p, shapes) in [
            (LayerId::CharLstm, &mut self.char_lstm, char_shapes),
            (LayerId::TokenLstm, &mut self.token_lstm, token_shapes),
        ] {
            for (i, data) in p.blocks_mut().into_iter().enumerate() {
                let (rows, cols) = shapes[i];
                out.push(ParamBlockMut {
                    layer,
                    name: LSTM_BLOCK_NAMES[i / 3][i % 3],
                    rows,
                    cols,
                    data,
                });
            }
        }
        let (rows, cols) = self.dense.w.shape();
        out.push(ParamBlockMut {
            layer: LayerId::Dense,
            name: "w",
            rows,
            cols,
            data: self.dense.w.as_mut_slice(),
        });
        let n = self.dense.b.len();
        out.push(ParamBlockMut {
            layer: LayerId::Dense,
            name: "b",
            rows: n,
            cols: 1,
            data: self.dense.b.as_mut_slice(),
        });
        let m = self.transitions.matrix_mut();
        let (rows, cols) = m.shape();
        out.push(ParamBlockMut {
            layer: LayerId::SeqOpt,
            name: "transitions",
            rows,
            cols,
            data: m.as_mut_slice(),
        });
        out
    }

    /// Encodes `s` with this model's vocabulary in inference mode.
    pub fn encode(&self, s: &Sentence) -> Result<EncodedSentence> {
        self.vocab.encode_sentence(s, Mode::Infer, &mut SeededRng::new(0))
    }

    pub fn forward(
        &self,
        s: &EncodedSentence,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<(EmissionLattice, ForwardCache)> {
        if s.is_empty() {
            return Err(NerError::contract("forward on an empty sentence"));
        }
        if s.char_ids.len() != s.len() {
            return Err(NerError::contract("forward: token and character sequences differ in length"));
        }
        if s.char_ids.iter().any(Vec::is_empty) {
            return Err(NerError::contract("forward: token with no characters"));
        }
        let token_vecs = self.token_emb.forward(&s.token_ids)?;
        let p = self.hyper.dropout_rate;
        let dropout = mode == Mode::Train && p > 0.0;
        let keep_scale = 1.0 / (1.0 - p);
        let mut char_caches = Vec::with_capacity(s.len());
        let mut inputs = Vec::with_capacity(s.len());
        let mut mask = dropout.then(|| Vec::with_capacity(s.len()));
        for (tok, ids) in token_vecs.into_iter().zip(&s.char_ids) {
            let chars = self.char_emb.forward(ids)?;
            let (summary, cache) = bilstm_sequence(&self.char_lstm, &chars, SequenceMode::FinalConcat)?;
            char_caches.push(cache);
            let mut x = tok.into_inner();
            x.extend_from_slice(&summary[0]);
            if let Some(m) = mask.as_mut() {
                let scale: Vec<f64> = (0..x.len())
                    .map(|_| if rng.bernoulli(p) { 0.0 } else { keep_scale })
                    .collect();
                for (v, s) in x.iter_mut().zip(&scale) {
                    *v *= s;
                }
                m.push(scale);
            }
            inputs.push(x);
        }
        let (hidden, token_cache) = bilstm_sequence(&self.token_lstm, &inputs, SequenceMode::AllStates)?;
        let k = self.dense.num_labels();
        let mut lattice = RealMatrix::zeros(s.len(), k);
        for (t, h) in hidden.iter().enumerate() {
            let scores = self.dense.forward(h)?;
            lattice.row_mut(t).copy_from_slice(&scores);
        }
        if !lattice.all_finite() {
            return Err(NerError::NumericOverflow("forward"));
        }
        Ok((
            lattice,
            ForwardCache {
                token_ids: s.token_ids.clone(),
                char_ids: s.char_ids.clone(),
                char_caches,
                mask,
                token_cache,
                hidden,
            },
        ))
    }

    /// Negative log-likelihood of `gold` without gradients.
    pub fn loss(&self, s: &EncodedSentence, gold: &[usize], mode: Mode, rng: &mut SeededRng) -> Result<f64> {
        let (lattice, _) = self.forward(s, mode, rng)?;
        let score = path_score(&lattice, &self.transitions, gold)?;
        Ok(log_partition(&lattice, &self.transitions)? - score)
    }

    /// Train-mode loss and gradients for every parameter group.
    pub fn loss_and_grads(
        &self,
        s: &EncodedSentence,
        gold: &[usize],
        rng: &mut SeededRng,
    ) -> Result<(f64, NerGradients)> {
        let mut grads = NerGradients::zeros_for(self);
        let (loss, _) = self.accumulate_grads(s, gold, Mode::Train, rng, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds this sentence's gradients into `grads`; returns the loss and the cache.
    pub fn accumulate_grads(
        &self,
        s: &EncodedSentence,
        gold: &[usize],
        mode: Mode,
        rng: &mut SeededRng,
        grads: &mut NerGradients,
    ) -> Result<(f64, ForwardCache)> {
        if gold.len() != s.len() {
            return Err(NerError::contract(format!(
                "gold has {} labels for {} tokens",
                gold.len(),
                s.len()
            )));
        }
        let (lattice, cache) = self.forward(s, mode, rng)?;
        let crf = nll_and_gradients(&lattice, &self.transitions, gold)?;
        axpy(1.0, crf.d_transitions.as_slice(), grads.transitions.as_mut_slice());

        let mut dh = Vec::with_capacity(s.len());
        for (t, h) in cache.hidden.iter().enumerate() {
            dh.push(self.dense.backward(h, crf.d_emissions.row(t), &mut grads.dense)?);
        }
        let dxs = bilstm_backward(&self.token_lstm, &cache.token_cache, &dh, &mut grads.token_lstm)?;
        let te = self.token_emb.dim();
        for (t, mut dx) in dxs.into_iter().enumerate() {
            if let Some(m) = &cache.mask {
                for (d, s) in dx.iter_mut().zip(&m[t]) {
                    *d *= s;
                }
            }
            grads.token_emb.add_row(cache.token_ids[t], &dx[..te]);
            let d_summary = &dx[te..];
            let d_chars = bilstm_backward(
                &self.char_lstm,
                &cache.char_caches[t],
                &[d_summary],
                &mut grads.char_lstm,
            )?;
            for (&c, g) in cache.char_ids[t].iter().zip(&d_chars) {
                grads.char_emb.add_row(c, g);
            }
        }
        Ok((crf.loss, cache))
    }

    /// Clips `grads` to the configured global norm, then takes one SGD step.
    /// Returns the clip factor (1.0 when unclipped).
    pub fn sgd_step(&mut self, grads: &mut NerGradients, lr: f64) -> Result<f64> {
        let factor = {
            let mut blocks = grads.blocks_mut();
            clip_global_norm(&mut blocks, self.hyper.grad_clip_norm)?
        };
        if lr == 0.0 {
            return Ok(factor);
        }
        for (row, g) in grads.token_emb.iter() {
            axpy(-lr, g, self.token_emb.matrix_mut().row_mut(row));
        }
        for (row, g) in grads.char_emb.iter() {
            axpy(-lr, g, self.char_emb.matrix_mut().row_mut(row));
        }
        for (p, g) in self.char_lstm.blocks_mut().into_iter().zip(grads.char_lstm.blocks_mut()) {
            axpy(-lr, g, p);
        }
        for (p, g) in self.token_lstm.blocks_mut().into_iter().zip(grads.token_lstm.blocks_mut()) {
            axpy(-lr, g, p);
        }
        axpy(-lr, grads.dense.w.as_slice(), self.dense.w.as_mut_slice());
        axpy(-lr, grads.dense.b.as_slice(), self.dense.b.as_mut_slice());
        axpy(-lr, grads.transitions.as_slice(), self.transitions.matrix_mut().as_mut_slice());
        Ok(factor)
    }

    /// Most likely label ids under the inference-mode lattice.
    pub fn predict_ids(&self, s: &EncodedSentence) -> Result<Vec<usize>> {
        let (lattice, _) = self.forward(s, Mode::Infer, &mut SeededRng::new(0))?;
        Ok(viterbi_decode(&lattice, &self.transitions)?.0)
    }

    pub fn predict(&self, s: &Sentence) -> Result<Vec<String>> {
        let ids = self.predict_ids(&self.encode(s)?)?;
        Ok(ids.into_iter().map(|i| self.vocab.label(i).to_string()).collect())
    }

    /// Overwrites parameters from `other`, which must have identical shapes.
    pub(crate) fn copy_params_from(&mut self, other: &NerModel) {
        self.token_emb = other.token_emb.clone();
        self.char_emb = other.char_emb.clone();
        self.char_lstm = other.char_lstm.clone();
        self.token_lstm = other.token_lstm.clone();
        self.dense = other.dense.clone();
        self.transitions = other.transitions.clone();
    }

    /// Builds a model from explicit parts, validating every shape invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        vocab: Vocabulary,
        hyper: Hyperparameters,
        token_emb: EmbeddingTable,
        char_emb: EmbeddingTable,
        char_lstm: BiLstmParams,
        token_lstm: BiLstmParams,
        dense: DenseParams,
        transitions: TransitionTable,
    ) -> Result<Self> {
        hyper.validate()?;
        let m = NerModel {
            vocab,
            hyper,
            token_emb,
            char_emb,
            char_lstm,
            token_lstm,
            dense,
            transitions,
        };
        m.check_shapes()?;
        Ok(m)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let h = &self.hyper;
        let k = self.vocab.num_labels();
        let dirs = h.directions();
        let lstm_ok = |p: &BiLstmParams, in_dim: usize, hidden: usize| {
            p.directions() == dirs
                && std::iter::once(&p.fwd)
                    .chain(p.bwd.as_ref())
                    .all(|d| d.in_dim() == in_dim && d.hidden() == hidden && d.check_shapes().is_ok())
        };
        let checks = [
            (
                self.token_emb.matrix().shape() == (self.vocab.num_tokens(), h.token_emb_dim),
                "token embedding",
            ),
            (
                self.char_emb.matrix().shape() == (self.vocab.num_chars(), h.char_emb_dim),
                "char embedding",
            ),
            (lstm_ok(&self.char_lstm, h.char_emb_dim, h.char_lstm_hidden), "char lstm"),
            (
                lstm_ok(&self.token_lstm, h.token_lstm_in_dim(), h.token_lstm_hidden),
                "token lstm",
            ),
            (
                self.dense.w.shape() == (k, h.dense_in_dim()) && self.dense.b.len() == k,
                "dense",
            ),
            (self.transitions.num_labels() == k, "transitions"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(NerError::contract(format!("{what} shape inconsistent with model"))),
            None => Ok(()),
        }
    }
}
