//! Block upper-triangular factor `U` with `U^T U = Rbar_DD^{-1}`.
//!
//! Only the diagonal blocks `U_mm` (upper Cholesky factors of `R_dot_m`) and the
//! `B` blocks to their right, `U^B_m = -U_mm R_{D_m D^B_m} R_{D^B_m D^B_m}^{-1}`,
//! are non-zero. Everything is built from block-local conditionals, so the dense
//! `Rbar_DD` is never formed.

use nalgebra::{DMatrix, DVector};

use super::grid::BlockMatrix;
use super::residual::{block_conditional, BlockConditional, ProjectedSet, Support};
use crate::data::Inputs;
use crate::error::{GpError, Result};
use crate::kernel::{Hyperparams, PointSet};
use crate::partition::BlockPartition;

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    bandwidth: usize,
    sizes: Vec<usize>,
    diag: Vec<DMatrix<f64>>,
    band: Vec<DMatrix<f64>>,
}

impl CholeskyFactor {
    pub fn from_conditionals(
        conditionals: &[BlockConditional],
        sizes: Vec<usize>,
        bandwidth: usize,
    ) -> Self {
        let mut diag = Vec::with_capacity(conditionals.len());
        let mut band = Vec::with_capacity(conditionals.len());
        for c in conditionals {
            let u_mm = c.schur().inverse_factor();
            let u_b = -(&u_mm * c.predictor());
            diag.push(u_mm);
            band.push(u_b);
        }
        CholeskyFactor {
            bandwidth,
            sizes,
            diag,
            band,
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn diag_block(&self, m: usize) -> &DMatrix<f64> {
        &self.diag[m]
    }

    /// `[U_{m,m+1}, ..., U_{m,min(m+B,M-1)}]`.
    pub fn band_block(&self, m: usize) -> &DMatrix<f64> {
        &self.band[m]
    }

    pub fn block(&self, m: usize, n: usize) -> DMatrix<f64> {
        if m == n {
            return self.diag[m].clone();
        }
        if n > m && n - m <= self.bandwidth && n < self.num_blocks() {
            let start: usize = self.sizes[m + 1..n].iter().sum();
            return self.band[m].columns(start, self.sizes[n]).into_owned();
        }
        DMatrix::zeros(self.sizes[m], self.sizes[n])
    }

    pub fn to_block_matrix(&self) -> BlockMatrix {
        let mut out = BlockMatrix::zeros(self.sizes.clone(), self.sizes.clone());
        for m in 0..self.num_blocks() {
            for n in 0..self.num_blocks() {
                out.set_block(m, n, self.block(m, n))
                    .expect("block shapes follow sizes");
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.to_block_matrix().to_dense()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut o = vec![0];
        for s in &self.sizes {
            o.push(o.last().unwrap() + s);
        }
        o
    }

    /// `U v` for a vector in block order.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let off = self.offsets();
        let mut out = DVector::zeros(v.len());
        for m in 0..self.num_blocks() {
            let mut acc = &self.diag[m] * v.rows(off[m], self.sizes[m]);
            let band_start = off[m] + self.sizes[m];
            let band_len = self.band[m].ncols();
            if band_len > 0 {
                acc += &self.band[m] * v.rows(band_start, band_len);
            }
            out.rows_mut(off[m], self.sizes[m]).copy_from(&acc);
        }
        out
    }

    /// `U^T v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let off = self.offsets();
        let mut out = DVector::zeros(v.len());
        for m in 0..self.num_blocks() {
            let vm = v.rows(off[m], self.sizes[m]);
            let d = self.diag[m].tr_mul(&vm);
            let mut seg = out.rows_mut(off[m], self.sizes[m]);
            seg += d;
            let band_len = self.band[m].ncols();
            if band_len > 0 {
                let b = self.band[m].tr_mul(&vm);
                let mut seg = out.rows_mut(off[m] + self.sizes[m], band_len);
                seg += b;
            }
        }
        out
    }

    /// `U^T U v`, i.e. `Rbar_DD^{-1} v`.
    pub fn apply_gram(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_transpose(&self.apply(v))
    }
}

/// Banded inverse Cholesky factor of `Rbar_DD` for the training blocks of
/// `partition`, with rows/columns in block order.
pub fn banded_inverse_cholesky(
    train: &Inputs,
    partition: &BlockPartition,
    support: &Support,
    h: &Hyperparams,
    bandwidth: usize,
) -> Result<CholeskyFactor> {
    let m_blocks = partition.num_blocks();
    if bandwidth >= m_blocks {
        return Err(GpError::invalid(format!(
            "Markov order {bandwidth} must be below the number of blocks {m_blocks}"
        )));
    }
    let projected: Vec<ProjectedSet> = partition
        .train_blocks()
        .iter()
        .map(|b| support.project(PointSet::train(train, b), h))
        .collect::<Result<_>>()?;
    let mut conditionals = Vec::with_capacity(m_blocks);
    for m in 0..m_blocks {
        let band = ProjectedSet::concat(
            partition.band(m, bandwidth).map(|k| &projected[k]),
            train.dim(),
            support.len(),
        );
        conditionals.push(block_conditional(&projected[m], &band, h).map_err(|e| e.in_block(m))?);
    }
    let sizes = partition.train_blocks().iter().map(Vec::len).collect();
    Ok(CholeskyFactor::from_conditionals(
        &conditionals,
        sizes,
        bandwidth,
    ))
}
