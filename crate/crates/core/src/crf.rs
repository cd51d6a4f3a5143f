//! Linear-chain sequence layer: path scoring, forward-algorithm partition,
//! negative log-likelihood with exact forward-backward gradients, and Viterbi.

use crate::error::{NerError, Result};
use crate::math::{lse, RealMatrix};

/// Per-position label scores, `sequence_length × num_labels`.
pub type EmissionLattice = RealMatrix;

/// Label bigram scores with two extra boundary states. `scores[a][b]` is the
/// score of moving from `a` to `b`; index `K` is START and `K + 1` is STOP.
/// Nothing ever reads transitions into START or out of STOP.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    num_labels: usize,
    scores: RealMatrix,
}

impl TransitionTable {
    pub fn zeros(num_labels: usize) -> Self {
        TransitionTable {
            num_labels,
            scores: RealMatrix::zeros(num_labels + 2, num_labels + 2),
        }
    }

    pub fn from_matrix(scores: RealMatrix) -> Result<Self> {
        if scores.rows() != scores.cols() || scores.rows() < 3 {
            return Err(NerError::contract(format!(
                "transition table must be (K+2)x(K+2) with K >= 1, got {}x{}",
                scores.rows(),
                scores.cols()
            )));
        }
        if !scores.all_finite() {
            return Err(NerError::contract("transition table has non-finite entries"));
        }
        Ok(TransitionTable {
            num_labels: scores.rows() - 2,
            scores,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn start(&self) -> usize {
        self.num_labels
    }

    pub fn stop(&self) -> usize {
        self.num_labels + 1
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.scores.get(from, to)
    }

    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        self.scores.set(from, to, v);
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.scores
    }

    pub fn matrix_mut(&mut self) -> &mut RealMatrix {
        &mut self.scores
    }
}

fn check_lattice(e: &EmissionLattice, t: &TransitionTable) -> Result<()> {
    if e.rows() == 0 {
        return Err(NerError::contract("empty emission lattice"));
    }
    if e.cols() != t.num_labels() {
        return Err(NerError::contract(format!(
            "lattice has {} labels, transition table {}",
            e.cols(),
            t.num_labels()
        )));
    }
    Ok(())
}

fn check_path(e: &EmissionLattice, t: &TransitionTable, y: &[usize]) -> Result<()> {
    check_lattice(e, t)?;
    if y.len() != e.rows() {
        return Err(NerError::contract(format!(
            "label sequence has length {}, lattice {}",
            y.len(),
            e.rows()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= t.num_labels()) {
        return Err(NerError::contract(format!("label id {bad} out of range")));
    }
    Ok(())
}

/// `T[START][y₁] + Σ e[t][yₜ] + Σ T[yₜ][yₜ₊₁] + T[y_L][STOP]`
pub fn path_score(e: &EmissionLattice, t: &TransitionTable, y: &[usize]) -> Result<f64> {
    check_path(e, t, y)?;
    Ok(path_score_unchecked(e, t, y))
}

fn path_score_unchecked(e: &EmissionLattice, t: &TransitionTable, y: &[usize]) -> f64 {
    let mut s = t.get(t.start(), y[0]);
    for (pos, &label) in y.iter().enumerate() {
        s += e.get(pos, label);
        if pos > 0 {
            s += t.get(y[pos - 1], label);
        }
    }
    s + t.get(y[y.len() - 1], t.stop())
}

/// Forward log-messages: `alpha[pos][k]` is the log-sum of scores of all
/// prefixes ending in label k at `pos`, emission included.
fn forward_messages(e: &EmissionLattice, t: &TransitionTable) -> RealMatrix {
    let (n, k) = e.shape();
    let mut alpha = RealMatrix::zeros(n, k);
    for j in 0..k {
        alpha.set(0, j, t.get(t.start(), j) + e.get(0, j));
    }
    let mut buf = vec![0.0; k];
    for pos in 1..n {
        for j in 0..k {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alpha.get(pos - 1, i) + t.get(i, j);
            }
            alpha.set(pos, j, lse(&buf) + e.get(pos, j));
        }
    }
    alpha
}

/// Backward log-messages: `beta[pos][k]` is the log-sum of scores of all
/// suffixes after `pos` given label k at `pos`, STOP included.
fn backward_messages(e: &EmissionLattice, t: &TransitionTable) -> RealMatrix {
    let (n, k) = e.shape();
    let mut beta = RealMatrix::zeros(n, k);
    for i in 0..k {
        beta.set(n - 1, i, t.get(i, t.stop()));
    }
    let mut buf = vec![0.0; k];
    for pos in (0..n - 1).rev() {
        for i in 0..k {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = t.get(i, j) + e.get(pos + 1, j) + beta.get(pos + 1, j);
            }
            beta.set(pos, i, lse(&buf));
        }
    }
    beta
}

fn log_partition_from(alpha: &RealMatrix, t: &TransitionTable) -> f64 {
    let last = alpha.rows() - 1;
    let ends: Vec<f64> = (0..alpha.cols())
        .map(|j| alpha.get(last, j) + t.get(j, t.stop()))
        .collect();
    lse(&ends)
}

/// Log of the sum of `exp(path_score)` over every label sequence, O(L·K²).
pub fn log_partition(e: &EmissionLattice, t: &TransitionTable) -> Result<f64> {
    check_lattice(e, t)?;
    let z = log_partition_from(&forward_messages(e, t), t);
    if !z.is_finite() {
        return Err(NerError::NumericOverflow("log_partition"));
    }
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct CrfLoss {
    pub loss: f64,
    pub d_emissions: RealMatrix,
    /// Same layout as the transition table; START-column and STOP-row stay zero.
    pub d_transitions: RealMatrix,
}

/// `log Z − path_score(gold)` and its exact gradients (marginals minus gold indicators).
pub fn nll_and_gradients(e: &EmissionLattice, t: &TransitionTable, gold: &[usize]) -> Result<CrfLoss> {
    check_path(e, t, gold)?;
    let (n, k) = e.shape();
    let alpha = forward_messages(e, t);
    let beta = backward_messages(e, t);
    let log_z = log_partition_from(&alpha, t);
    if !log_z.is_finite() {
        return Err(NerError::NumericOverflow("nll_and_gradients"));
    }
    let gold_score = path_score_unchecked(e, t, gold);
    let loss = (log_z - gold_score).max(0.0);

    let mut d_e = RealMatrix::zeros(n, k);
    for pos in 0..n {
        for j in 0..k {
            d_e.set(pos, j, (alpha.get(pos, j) + beta.get(pos, j) - log_z).exp());
        }
    }
    let mut d_t = RealMatrix::zeros(k + 2, k + 2);
    let (start, stop) = (t.start(), t.stop());
    for j in 0..k {
        d_t.set(start, j, d_e.get(0, j));
        d_t.set(j, stop, d_e.get(n - 1, j));
    }
    for pos in 0..n.saturating_sub(1) {
        for i in 0..k {
            let a = alpha.get(pos, i);
            for j in 0..k {
                let m = (a + t.get(i, j) + e.get(pos + 1, j) + beta.get(pos + 1, j) - log_z).exp();
                d_t.set(i, j, d_t.get(i, j) + m);
            }
        }
    }

    for (pos, &y) in gold.iter().enumerate() {
        d_e.set(pos, y, d_e.get(pos, y) - 1.0);
        if pos > 0 {
            let prev = gold[pos - 1];
            d_t.set(prev, y, d_t.get(prev, y) - 1.0);
        }
    }
    d_t.set(start, gold[0], d_t.get(start, gold[0]) - 1.0);
    d_t.set(gold[n - 1], stop, d_t.get(gold[n - 1], stop) - 1.0);

    Ok(CrfLoss {
        loss,
        d_emissions: d_e,
        d_transitions: d_t,
    })
}

/// Best-scoring label sequence and its score. Ties go to the lower label id.
pub fn viterbi_decode(e: &EmissionLattice, t: &TransitionTable) -> Result<(Vec<usize>, f64)> {
    check_lattice(e, t)?;
    let (n, k) = e.shape();
    let mut delta: Vec<f64> = (0..k).map(|j| t.get(t.start(), j) + e.get(0, j)).collect();
    let mut back = vec![vec![0usize; k]; n];
    let mut next = vec![0.0; k];
    for pos in 1..n {
        for j in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + t.get(0, j);
            for (i, &d) in delta.iter().enumerate().skip(1) {
                let s = d + t.get(i, j);
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[pos][j] = best;
            next[j] = best_score + e.get(pos, j);
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    let mut last_score = delta[0] + t.get(0, t.stop());
    for (j, &d) in delta.iter().enumerate().skip(1) {
        let s = d + t.get(j, t.stop());
        if s > last_score {
            last = j;
            last_score = s;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for pos in (1..n).rev() {
        path[pos - 1] = back[pos][path[pos]];
    }
    let score = path_score_unchecked(e, t, &path);
    Ok((path, score))
}
