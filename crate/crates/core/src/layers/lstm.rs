//! LSTM cell and (bi)directional sequence runner with hand-written BPTT.
//!
//! Gate equations, per step:
//!
//! ```text
//! i = σ(W_i x + U_i h_prev + b_i)     f = σ(W_f x + U_f h_prev + b_f)
//! o = σ(W_o x + U_o h_prev + b_o)     g = tanh(W_g x + U_g h_prev + b_g)
//! c = f ⊙ c_prev + i ⊙ g              h = o ⊙ tanh(c)
//! ```
//!
//! The four gates are stacked row-wise in one `(4·hidden) × in` matrix in the
//! order input, forget, output, candidate.

use std::ops::Range;

use crate::error::{NerError, Result};
use crate::math::{init_radius, sigmoid, RealMatrix, RealVector, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

pub const FORGET_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: RealMatrix,
    pub u: RealMatrix,
    pub b: RealVector,
}

impl LstmParams {
    pub fn new(in_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let w = RealMatrix::uniform(4 * hidden, in_dim, init_radius(in_dim), rng);
        let u = RealMatrix::uniform(4 * hidden, hidden, init_radius(hidden), rng);
        let mut b = RealVector::zeros(4 * hidden);
        b[gate_range(Gate::Forget, hidden)]
            .iter_mut()
            .for_each(|v| *v = FORGET_BIAS_INIT);
        LstmParams { w, u, b }
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w: RealMatrix::zeros(4 * hidden, in_dim),
            u: RealMatrix::zeros(4 * hidden, hidden),
            b: RealVector::zeros(4 * hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden())
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    /// Row range of `gate` inside the stacked weights and bias.
    pub fn gate_rows(&self, gate: Gate) -> Range<usize> {
        gate_range(gate, self.hidden())
    }

    pub fn check_shapes(&self) -> Result<()> {
        let h = self.hidden();
        if self.w.rows() != 4 * h || self.u.rows() != 4 * h || self.b.len() != 4 * h {
            return Err(NerError::contract("lstm: inconsistent gate shapes"));
        }
        Ok(())
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.w.as_mut_slice(),
            self.u.as_mut_slice(),
            self.b.as_mut_slice(),
        ]
    }
}

fn gate_range(gate: Gate, hidden: usize) -> Range<usize> {
    let k = gate as usize;
    k * hidden..(k + 1) * hidden
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, stacked i, f, o, g.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(RealVector, RealVector, StepCache)> {
    p.check_shapes()?;
    let h = p.hidden();
    if x.len() != p.in_dim() || h_prev.len() != h || c_prev.len() != h {
        return Err(NerError::contract(format!(
            "lstm_step: expected x[{}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
            p.in_dim(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let cache = step(p, x.to_vec(), h_prev.to_vec(), c_prev.to_vec());
    if cache.c.iter().chain(&cache.h).any(|v| !v.is_finite()) {
        return Err(NerError::NumericOverflow("lstm_step"));
    }
    Ok((
        RealVector::from(cache.h.clone()),
        RealVector::from(cache.c.clone()),
        cache,
    ))
}

fn step(p: &LstmParams, x: Vec<f64>, h_prev: Vec<f64>, c_prev: Vec<f64>) -> StepCache {
    let hd = p.hidden();
    let mut gates = p.b.to_vec();
    p.w.gemv_acc(&x, &mut gates);
    p.u.gemv_acc(&h_prev, &mut gates);
    let (sig, cand) = gates.split_at_mut(3 * hd);
    sig.iter_mut().for_each(|v| *v = sigmoid(*v));
    cand.iter_mut().for_each(|v| *v = v.tanh());

    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, o, g) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
    StepCache {
        x,
        h_prev,
        c_prev,
        gates,
        c,
        tanh_c,
        h,
    }
}

/// Backward through one step. `dh`/`dc` are the gradients reaching this
/// step's outputs; parameter gradients are accumulated into `grads`.
/// Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward(
    p: &LstmParams,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let g = &cache.gates;
    let mut dpre = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, o, cand) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let d_c = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dpre[k] = d_c * cand * i * (1.0 - i);
        dpre[hd + k] = d_c * cache.c_prev[k] * f * (1.0 - f);
        dpre[2 * hd + k] = d_o * o * (1.0 - o);
        dpre[3 * hd + k] = d_c * i * (1.0 - cand * cand);
        dc_prev[k] = d_c * f;
    }
    grads.w.outer_acc(&dpre, &cache.x);
    grads.u.outer_acc(&dpre, &cache.h_prev);
    for (gb, d) in grads.b.iter_mut().zip(&dpre) {
        *gb += d;
    }
    let mut dx = vec![0.0; p.in_dim()];
    p.w.gemv_t_acc(&dpre, &mut dx);
    let mut dh_prev = vec![0.0; hd];
    p.u.gemv_t_acc(&dpre, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// Runs one direction over `xs` (already in processing order) from zero state.
fn run_direction<X: AsRef<[f64]>>(p: &LstmParams, xs: impl Iterator<Item = X>) -> Vec<StepCache> {
    let hd = p.hidden();
    let mut out: Vec<StepCache> = Vec::new();
    for x in xs {
        let (h_prev, c_prev) = match out.last() {
            Some(prev) => (prev.h.clone(), prev.c.clone()),
            None => (vec![0.0; hd], vec![0.0; hd]),
        };
        out.push(step(p, x.as_ref().to_vec(), h_prev, c_prev));
    }
    out
}

/// BPTT over one direction. `dh[t]` is the external gradient on step t's
/// hidden output (processing order). Returns dx per step, processing order.
fn backward_direction(
    p: &LstmParams,
    caches: &[StepCache],
    dh: &[Vec<f64>],
    grads: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let hd = p.hidden();
    let mut dxs = vec![Vec::new(); caches.len()];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    for t in (0..caches.len()).rev() {
        let mut dh_t = dh[t].clone();
        for (a, b) in dh_t.iter_mut().zip(&dh_next) {
            *a += b;
        }
        let (dx, dh_prev, dc_prev) = lstm_step_backward(p, &caches[t], &dh_t, &dc_next, grads);
        dxs[t] = dx;
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dxs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    /// One output per position: `[h_fwd(t); h_bwd(t)]`.
    AllStates,
    /// A single summary: `[h_fwd(T); h_bwd(1)]`.
    FinalConcat,
}

/// Forward parameters plus optional backward-direction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: Option<LstmParams>,
}

impl BiLstmParams {
    pub fn new(in_dim: usize, hidden: usize, bidirectional: bool, rng: &mut SeededRng) -> Self {
        let fwd = LstmParams::new(in_dim, hidden, &mut rng.fork("fwd"));
        let bwd = bidirectional.then(|| LstmParams::new(in_dim, hidden, &mut rng.fork("bwd")));
        BiLstmParams { fwd, bwd }
    }

    pub fn zeros_like(&self) -> Self {
        BiLstmParams {
            fwd: self.fwd.zeros_like(),
            bwd: self.bwd.as_ref().map(LstmParams::zeros_like),
        }
    }

    pub fn directions(&self) -> usize {
        if self.bwd.is_some() {
            2
        } else {
            1
        }
    }

    pub fn in_dim(&self) -> usize {
        self.fwd.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn out_dim(&self) -> usize {
        self.directions() * self.hidden()
    }

    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.fwd.blocks_mut().into_iter().collect();
        if let Some(b) = self.bwd.as_mut() {
            v.extend(b.blocks_mut());
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub mode: SequenceMode,
    pub fwd: Vec<StepCache>,
    /// Processing order, i.e. position T first.
    pub bwd: Option<Vec<StepCache>>,
}

impl BiLstmCache {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }
}

pub fn bilstm_sequence<X: AsRef<[f64]>>(
    p: &BiLstmParams,
    xs: &[X],
    mode: SequenceMode,
) -> Result<(Vec<RealVector>, BiLstmCache)> {
    if xs.is_empty() {
        return Err(NerError::contract("bilstm over an empty sequence"));
    }
    p.fwd.check_shapes()?;
    if let Some(b) = &p.bwd {
        b.check_shapes()?;
        if b.in_dim() != p.fwd.in_dim() || b.hidden() != p.fwd.hidden() {
            return Err(NerError::contract("bilstm: direction shapes differ"));
        }
    }
    if let Some(x) = xs.iter().find(|x| x.as_ref().len() != p.in_dim()) {
        return Err(NerError::contract(format!(
            "bilstm: input dim {} != {}",
            x.as_ref().len(),
            p.in_dim()
        )));
    }
    Ok(bilstm_forward_unchecked(p, xs, mode))
}

fn bilstm_forward_unchecked<X: AsRef<[f64]>>(
    p: &BiLstmParams,
    xs: &[X],
    mode: SequenceMode,
) -> (Vec<RealVector>, BiLstmCache) {
    let n = xs.len();
    let fwd = run_direction(&p.fwd, xs.iter());
    let bwd = p.bwd.as_ref().map(|b| run_direction(b, xs.iter().rev()));
    let outputs = match mode {
        SequenceMode::AllStates => (0..n)
            .map(|t| {
                let mut v = fwd[t].h.clone();
                if let Some(b) = &bwd {
                    v.extend_from_slice(&b[n - 1 - t].h);
                }
                RealVector::from(v)
            })
            .collect(),
        SequenceMode::FinalConcat => {
            let mut v = fwd[n - 1].h.clone();
            if let Some(b) = &bwd {
                v.extend_from_slice(&b[n - 1].h);
            }
            vec![RealVector::from(v)]
        }
    };
    (outputs, BiLstmCache { mode, fwd, bwd })
}

/// Backpropagates `d_out` (shaped like the forward outputs) through both
/// directions. Returns the gradient for each input position, in input order.
pub fn bilstm_backward<D: AsRef<[f64]>>(
    p: &BiLstmParams,
    cache: &BiLstmCache,
    d_out: &[D],
    grads: &mut BiLstmParams,
) -> Result<Vec<Vec<f64>>> {
    let n = cache.len();
    let hd = p.hidden();
    let expected = match cache.mode {
        SequenceMode::AllStates => n,
        SequenceMode::FinalConcat => 1,
    };
    if d_out.len() != expected || d_out.iter().any(|d| d.as_ref().len() != p.out_dim()) {
        return Err(NerError::contract("bilstm backward: gradient shape mismatch"));
    }
    let mut dh_f = vec![vec![0.0; hd]; n];
    let mut dh_b = vec![vec![0.0; hd]; n];
    match cache.mode {
        SequenceMode::AllStates => {
            for t in 0..n {
                let d = d_out[t].as_ref();
                dh_f[t].copy_from_slice(&d[..hd]);
                if p.bwd.is_some() {
                    dh_b[n - 1 - t].copy_from_slice(&d[hd..]);
                }
            }
        }
        SequenceMode::FinalConcat => {
            let d = d_out[0].as_ref();
            dh_f[n - 1].copy_from_slice(&d[..hd]);
            if p.bwd.is_some() {
                dh_b[n - 1].copy_from_slice(&d[hd..]);
            }
        }
    }
    let mut dxs = backward_direction(&p.fwd, &cache.fwd, &dh_f, &mut grads.fwd);
    if let (Some(bp), Some(bc), Some(bg)) = (&p.bwd, &cache.bwd, grads.bwd.as_mut()) {
        let dxb = backward_direction(bp, bc, &dh_b, bg);
        for (t, dx) in dxs.iter_mut().enumerate() {
            for (a, b) in dx.iter_mut().zip(&dxb[n - 1 - t]) {
                *a += b;
            }
        }
    }
    Ok(dxs)
}
