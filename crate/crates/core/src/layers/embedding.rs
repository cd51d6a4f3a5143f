use std::collections::BTreeMap;

use crate::error::{NerError, Result};
use crate::math::{axpy, init_radius, RealMatrix, RealVector, SeededRng};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Lookup table mapping ids to dense rows. Row 0 is PAD, row 1 is UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    table: RealMatrix,
}

impl EmbeddingTable {
    pub fn new(name: &str, vocab_size: usize, dim: usize, rng: &mut SeededRng) -> Self {
        EmbeddingTable {
            name: name.to_string(),
            table: RealMatrix::uniform(vocab_size, dim, init_radius(dim), rng),
        }
    }

    pub fn from_matrix(name: &str, table: RealMatrix) -> Self {
        EmbeddingTable {
            name: name.to_string(),
            table,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.table
    }

    pub fn matrix_mut(&mut self) -> &mut RealMatrix {
        &mut self.table
    }

    #[inline]
    pub fn row(&self, id: usize) -> &[f64] {
        self.table.row(id)
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.vocab_size()) {
            Some(id) => Err(NerError::contract(format!(
                "{}: id {id} out of range for {} rows",
                self.name,
                self.vocab_size()
            ))),
            None => Ok(()),
        }
    }

    pub fn forward(&self, ids: &[usize]) -> Result<Vec<RealVector>> {
        self.check_ids(ids)?;
        Ok(ids.iter().map(|&id| RealVector::from(self.row(id))).collect())
    }

    /// Adds each upstream gradient to the row it was looked up from.
    pub fn backward(
        &self,
        ids: &[usize],
        upstream: &[RealVector],
        grads: &mut SparseRowGrad,
    ) -> Result<()> {
        self.check_ids(ids)?;
        if ids.len() != upstream.len() {
            return Err(NerError::contract("embedding backward: ids/grads length mismatch"));
        }
        if grads.dim() != self.dim() {
            return Err(NerError::contract("embedding backward: gradient dim mismatch"));
        }
        for (&id, g) in ids.iter().zip(upstream) {
            if g.len() != self.dim() {
                return Err(NerError::contract("embedding backward: upstream dim mismatch"));
            }
            grads.add_row(id, g);
        }
        Ok(())
    }
}

/// Gradient of an embedding table, stored only for rows that were touched.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowGrad {
    dim: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseRowGrad {
    pub fn new(dim: usize) -> Self {
        SparseRowGrad {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn add_row(&mut self, id: usize, g: &[f64]) {
        let row = self.rows.entry(id).or_insert_with(|| vec![0.0; self.dim]);
        axpy(1.0, g, row);
    }

    pub fn row(&self, id: usize) -> Option<&[f64]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.rows.values_mut().map(Vec::as_mut_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
