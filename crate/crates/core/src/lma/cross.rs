//! `Rbar_{D_k U_n}` for every training block `k` and test block `n`.
//!
//! Blocks outside the band are built by repeated [`markov_step`]s from blocks
//! nearer the diagonal. The parallel executor performs exactly the same steps
//! on its workers, so the two paths agree bit for bit.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::LmaSetup;
use crate::blockmat::{residual, BlockConditional};
use crate::error::{GpError, Result};

/// `sum_i predictor[:, cols_i] * parts[i]`, accumulated in order.
pub fn markov_step(predictor: &DMatrix<f64>, parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let ncols = parts.first().map_or(0, |p| p.ncols());
    let mut out = DMatrix::zeros(predictor.nrows(), ncols);
    let mut off = 0;
    for p in parts {
        let rows = p.nrows();
        out.gemm(1.0, &predictor.columns(off, rows), *p, 1.0);
        off += rows;
    }
    debug_assert_eq!(off, predictor.ncols());
    out
}

/// Residual cross blocks `rbar[k][n] = Rbar_{D_k U_n}`.
#[derive(Debug, Clone)]
pub struct CrossBlocks {
    rbar: Vec<Vec<DMatrix<f64>>>,
}

impl CrossBlocks {
    pub fn from_blocks(rbar: Vec<Vec<DMatrix<f64>>>) -> Result<Self> {
        let m = rbar.len();
        if rbar.iter().any(|row| row.len() != m) {
            return Err(GpError::invalid("cross blocks must form an M x M grid"));
        }
        Ok(CrossBlocks { rbar })
    }

    pub fn num_blocks(&self) -> usize {
        self.rbar.len()
    }

    pub fn rbar(&self, k: usize, n: usize) -> &DMatrix<f64> {
        &self.rbar[k][n]
    }

    /// `Rbar_{D_k U}` with the test blocks side by side.
    pub fn rbar_row(&self, k: usize) -> DMatrix<f64> {
        hstack(&self.rbar[k])
    }

    /// `Sigma_bar_{D_k U} = Q_{D_k U} + Rbar_{D_k U}`.
    pub fn sigma_bar_du(&self, setup: &LmaSetup, k: usize) -> DMatrix<f64> {
        sigma_bar_row(setup, k, &self.rbar[k])
    }

    /// Full approximate prior `Sigma_bar_UU` in block order. Off-band blocks use
    /// `Rbar_{U_m U_n} = R_{U_m D^B_m} R_{D^B_m D^B_m}^{-1} Rbar_{D^B_m U_n}`.
    pub fn prior_uu_full(&self, setup: &LmaSetup, conds: &[BlockConditional]) -> DMatrix<f64> {
        let all_u = setup.all_test();
        let mut out = all_u.phi().tr_mul(all_u.phi());
        let off = setup.partition.test_offsets();
        let m_blocks = setup.num_blocks();
        for m in 0..m_blocks {
            let u_m = setup.test_set(m);
            let band = setup.partition.band(m, setup.bandwidth);
            let far: Vec<usize> = (m + setup.bandwidth + 1..m_blocks).collect();
            let h_m = if far.is_empty() {
                None
            } else {
                Some(conds[m].predictor_for(u_m, &setup.band_set(m), &setup.h))
            };
            for n in m..m_blocks {
                let block = if n - m <= setup.bandwidth {
                    residual(u_m, setup.test_set(n), &setup.h)
                } else {
                    let parts: Vec<&DMatrix<f64>> =
                        band.clone().map(|j| &self.rbar[j][n]).collect();
                    markov_step(h_m.as_ref().expect("far blocks exist"), &parts)
                };
                let (r, c) = (u_m.len(), setup.test_set(n).len());
                let mut v = out.view_mut((off[m], off[n]), (r, c));
                v += &block;
                if n != m {
                    let mut v = out.view_mut((off[n], off[m]), (c, r));
                    v += block.transpose();
                }
            }
        }
        out
    }
}

pub(crate) fn sigma_bar_row(setup: &LmaSetup, k: usize, rbar: &[DMatrix<f64>]) -> DMatrix<f64> {
    let all_u = setup.all_test();
    setup.train_set(k).phi().tr_mul(all_u.phi()) + hstack(rbar)
}

pub(crate) fn hstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.columns_mut(off, p.ncols()).copy_from(p);
        off += p.ncols();
    }
    out
}

pub(crate) fn vstack(parts: &[&DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.nrows()).copy_from(*p);
        off += p.nrows();
    }
    out
}

/// Whether `Rbar_{D_j D_k}` (with `j < k`) is needed on the transpose path,
/// i.e. some `n < j` has `j` in its band and `k` beyond it. The set is closed
/// under the recursion: an off-band needed block only uses needed blocks.
pub fn dd_block_needed(j: usize, k: usize, bandwidth: usize) -> bool {
    j >= 1 && k > j && k > j.saturating_sub(bandwidth) + bandwidth
}

/// Computes every `Rbar_{D_k U_n}` on one thread.
pub fn cross_blocks_centralized(setup: &LmaSetup, conds: &[BlockConditional]) -> CrossBlocks {
    let m_blocks = setup.num_blocks();
    let b = setup.bandwidth;
    let h = &setup.h;
    let mut rbar: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; m_blocks]; m_blocks];

    for k in 0..m_blocks {
        for n in k.saturating_sub(b)..(k + b + 1).min(m_blocks) {
            rbar[k][n] = Some(residual(setup.train_set(k), setup.test_set(n), h));
        }
    }
    if b > 0 {
        // upper: offsets B+1, B+2, ...
        for d in b + 1..m_blocks {
            for k in 0..m_blocks - d {
                let n = k + d;
                let parts: Vec<&DMatrix<f64>> = setup
                    .partition
                    .band(k, b)
                    .map(|j| rbar[j][n].as_ref().expect("nearer diagonal done"))
                    .collect();
                rbar[k][n] = Some(markov_step(conds[k].predictor(), &parts));
            }
        }
        // lower via the transpose path
        let dd = dd_blocks(setup, conds);
        for n in 0..m_blocks {
            if n + b + 1 >= m_blocks {
                continue;
            }
            let h_n = conds[n].predictor_for(setup.test_set(n), &setup.band_set(n), h);
            for k in n + b + 1..m_blocks {
                let parts: Vec<&DMatrix<f64>> =
                    setup.partition.band(n, b).map(|j| &dd[&(j, k)]).collect();
                rbar[k][n] = Some(markov_step(&h_n, &parts).transpose());
            }
        }
    } else {
        for (k, row) in rbar.iter_mut().enumerate() {
            for (n, cell) in row.iter_mut().enumerate() {
                if cell.is_none() {
                    *cell = Some(DMatrix::zeros(
                        setup.train_set(k).len(),
                        setup.test_set(n).len(),
                    ));
                }
            }
        }
    }
    CrossBlocks {
        rbar: rbar
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| c.expect("all blocks filled"))
                    .collect()
            })
            .collect(),
    }
}

/// Upper-triangular `Rbar_{D_j D_k}` blocks required by the transpose path,
/// built by increasing offset `k - j`.
pub(crate) fn dd_blocks(
    setup: &LmaSetup,
    conds: &[BlockConditional],
) -> HashMap<(usize, usize), DMatrix<f64>> {
    let m_blocks = setup.num_blocks();
    let b = setup.bandwidth;
    let mut dd: HashMap<(usize, usize), DMatrix<f64>> = HashMap::new();
    for d in 1..m_blocks {
        for j in 0..m_blocks - d {
            let k = j + d;
            if !dd_block_needed(j, k, b) {
                continue;
            }
            let block = if d <= b {
                residual(setup.train_set(j), setup.train_set(k), &setup.h)
            } else {
                let parts: Vec<&DMatrix<f64>> = setup
                    .partition
                    .band(j, b)
                    .map(|i| dd.get(&(i, k)).expect("nearer diagonal done"))
                    .collect();
                markov_step(conds[j].predictor(), &parts)
            };
            dd.insert((j, k), block);
        }
    }
    dd
}
