use crate::error::{NerError, Result};
use crate::math::{init_radius, RealMatrix, RealVector, SeededRng};

/// Fully connected projection from hidden states to per-label scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: RealMatrix,
    pub b: RealVector,
}

impl DenseParams {
    pub fn new(in_dim: usize, num_labels: usize, rng: &mut SeededRng) -> Self {
        DenseParams {
            w: RealMatrix::uniform(num_labels, in_dim, init_radius(in_dim), rng),
            b: RealVector::zeros(num_labels),
        }
    }

    pub fn zeros(in_dim: usize, num_labels: usize) -> Self {
        DenseParams {
            w: RealMatrix::zeros(num_labels, in_dim),
            b: RealVector::zeros(num_labels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.num_labels())
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.w.rows()
    }

    fn check(&self, h: &[f64]) -> Result<()> {
        if self.b.len() != self.w.rows() || h.len() != self.w.cols() {
            return Err(NerError::contract(format!(
                "dense: W is {}x{}, b has {}, input has {}",
                self.w.rows(),
                self.w.cols(),
                self.b.len(),
                h.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, h: &[f64]) -> Result<RealVector> {
        self.check(h)?;
        Ok(self.forward_unchecked(h))
    }

    #[inline]
    pub(crate) fn forward_unchecked(&self, h: &[f64]) -> RealVector {
        let mut out = self.b.to_vec();
        self.w.gemv_acc(h, &mut out);
        RealVector::from(out)
    }

    /// Accumulates dW and db into `grads` and returns the gradient w.r.t. `h`.
    pub fn backward(&self, h: &[f64], d_scores: &[f64], grads: &mut DenseParams) -> Result<Vec<f64>> {
        self.check(h)?;
        if d_scores.len() != self.num_labels() || grads.w.shape() != self.w.shape() {
            return Err(NerError::contract("dense backward: shape mismatch"));
        }
        grads.w.outer_acc(d_scores, h);
        for (gb, d) in grads.b.iter_mut().zip(d_scores) {
            *gb += d;
        }
        let mut dh = vec![0.0; self.in_dim()];
        self.w.gemv_t_acc(d_scores, &mut dh);
        Ok(dh)
    }
}
