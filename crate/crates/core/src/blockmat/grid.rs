use nalgebra::DMatrix;

use crate::error::{GpError, Result};

/// Dense matrix stored as a grid of blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    // row-major grid
    blocks: Vec<DMatrix<f64>>,
}

impl BlockMatrix {
    pub fn zeros(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        let mut blocks = Vec::with_capacity(row_sizes.len() * col_sizes.len());
        for &r in &row_sizes {
            for &c in &col_sizes {
                blocks.push(DMatrix::zeros(r, c));
            }
        }
        BlockMatrix {
            row_sizes,
            col_sizes,
            blocks,
        }
    }

    pub fn from_dense(
        a: &DMatrix<f64>,
        row_sizes: Vec<usize>,
        col_sizes: Vec<usize>,
    ) -> Result<Self> {
        let rows: usize = row_sizes.iter().sum();
        let cols: usize = col_sizes.iter().sum();
        if a.shape() != (rows, cols) {
            return Err(GpError::DimensionMismatch {
                expected: rows * cols,
                found: a.nrows() * a.ncols(),
            });
        }
        let mut out = BlockMatrix::zeros(row_sizes, col_sizes);
        let ro = out.row_offsets();
        let co = out.col_offsets();
        for m in 0..out.row_sizes.len() {
            for n in 0..out.col_sizes.len() {
                let b = a
                    .view((ro[m], co[n]), (out.row_sizes[m], out.col_sizes[n]))
                    .into_owned();
                let idx = m * out.col_sizes.len() + n;
                out.blocks[idx] = b;
            }
        }
        Ok(out)
    }

    pub fn block_rows(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn block_cols(&self) -> usize {
        self.col_sizes.len()
    }

    pub fn block(&self, m: usize, n: usize) -> &DMatrix<f64> {
        &self.blocks[m * self.col_sizes.len() + n]
    }

    pub fn set_block(&mut self, m: usize, n: usize, b: DMatrix<f64>) -> Result<()> {
        if b.shape() != (self.row_sizes[m], self.col_sizes[n]) {
            return Err(GpError::DimensionMismatch {
                expected: self.row_sizes[m] * self.col_sizes[n],
                found: b.nrows() * b.ncols(),
            });
        }
        let idx = m * self.col_sizes.len() + n;
        self.blocks[idx] = b;
        Ok(())
    }

    pub fn row_offsets(&self) -> Vec<usize> {
        prefix(&self.row_sizes)
    }

    pub fn col_offsets(&self) -> Vec<usize> {
        prefix(&self.col_sizes)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let ro = self.row_offsets();
        let co = self.col_offsets();
        let mut out = DMatrix::zeros(ro[self.row_sizes.len()], co[self.col_sizes.len()]);
        for m in 0..self.row_sizes.len() {
            for n in 0..self.col_sizes.len() {
                out.view_mut((ro[m], co[n]), (self.row_sizes[m], self.col_sizes[n]))
                    .copy_from(self.block(m, n));
            }
        }
        out
    }
}

fn prefix(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s);
    }
    out
}
