//! Approximate residual blocks over `V_m = D_m ∪ U_m`, straight from the
//! four-case recursive definition. Used by the direct predictor and as the
//! centralized reference in tests.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::LmaSetup;
use crate::blockmat::{cholesky_jittered_with_context, residual, JitteredCholesky, ProjectedSet};
use crate::error::Result;

pub struct RbarTable<'s> {
    setup: &'s LmaSetup,
    v_sets: Vec<ProjectedSet>,
    band_sets: Vec<ProjectedSet>,
    band_chols: Vec<JitteredCholesky>,
    // upper triangle (m <= n) only
    cache: HashMap<(usize, usize), DMatrix<f64>>,
}

impl<'s> RbarTable<'s> {
    pub fn new(setup: &'s LmaSetup) -> Result<Self> {
        let m_blocks = setup.num_blocks();
        let dim = setup.dim();
        let s = setup.support.len();
        let v_sets = (0..m_blocks)
            .map(|m| ProjectedSet::concat([setup.train_set(m), setup.test_set(m)], dim, s))
            .collect();
        let band_sets: Vec<ProjectedSet> = (0..m_blocks).map(|m| setup.band_set(m)).collect();
        let band_chols = band_sets
            .iter()
            .enumerate()
            .map(|(m, b)| {
                cholesky_jittered_with_context(
                    &residual(b, b, &setup.h),
                    "band residual covariance",
                )
                .map_err(|e| e.in_block(m))
            })
            .collect::<Result<_>>()?;
        Ok(RbarTable {
            setup,
            v_sets,
            band_sets,
            band_chols,
            cache: HashMap::new(),
        })
    }

    pub fn v_set(&self, m: usize) -> &ProjectedSet {
        &self.v_sets[m]
    }

    pub fn max_jitter(&self) -> f64 {
        self.band_chols
            .iter()
            .map(|c| c.jitter())
            .fold(0.0, f64::max)
    }

    /// `Rbar_{V_m V_n}`.
    pub fn block(&mut self, m: usize, n: usize) -> DMatrix<f64> {
        if m <= n {
            self.upper(m, n)
        } else {
            self.upper(n, m).transpose()
        }
    }

    fn upper(&mut self, m: usize, n: usize) -> DMatrix<f64> {
        if let Some(b) = self.cache.get(&(m, n)) {
            return b.clone();
        }
        let bandwidth = self.setup.bandwidth;
        let out = if n - m <= bandwidth {
            residual(&self.v_sets[m], &self.v_sets[n], &self.setup.h)
        } else if bandwidth == 0 {
            DMatrix::zeros(self.v_sets[m].len(), self.v_sets[n].len())
        } else {
            // Rbar_{D^B_m V_n}: the D_k rows of Rbar_{V_k V_n} for k in the band
            let band = self.setup.partition.band(m, bandwidth);
            let mut stack = DMatrix::zeros(self.band_sets[m].len(), self.v_sets[n].len());
            let mut row = 0;
            for k in band {
                let d_k = self.setup.train_set(k).len();
                let b = self.upper(k, n);
                stack.rows_mut(row, d_k).copy_from(&b.rows(0, d_k));
                row += d_k;
            }
            let g = self.band_chols[m].solve(&stack);
            residual(&self.v_sets[m], &self.band_sets[m], &self.setup.h) * g
        };
        self.cache.insert((m, n), out.clone());
        out
    }

    /// `Sigma_bar_{V_m V_n} = Q_{V_m V_n} + Rbar_{V_m V_n}`.
    pub fn sigma_bar_block(&mut self, m: usize, n: usize) -> DMatrix<f64> {
        let q = self.v_sets[m].phi().tr_mul(self.v_sets[n].phi());
        q + self.block(m, n)
    }

    /// Dense `Rbar_DD` in block order.
    pub fn rbar_dd_dense(&mut self) -> DMatrix<f64> {
        let sizes: Vec<usize> = (0..self.setup.num_blocks())
            .map(|m| self.setup.train_set(m).len())
            .collect();
        self.assemble(&sizes, &sizes, |t, m, n| {
            let b = t.block(m, n);
            b.view((0, 0), (sizes[m], sizes[n])).into_owned()
        })
    }

    /// Dense `(Sigma_bar_DD, Sigma_bar_UD, Sigma_bar_UU)` in block order.
    pub fn sigma_bar_dense(&mut self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let m_blocks = self.setup.num_blocks();
        let d: Vec<usize> = (0..m_blocks)
            .map(|m| self.setup.train_set(m).len())
            .collect();
        let u: Vec<usize> = (0..m_blocks)
            .map(|m| self.setup.test_set(m).len())
            .collect();
        let mut full = vec![vec![DMatrix::zeros(0, 0); m_blocks]; m_blocks];
        for m in 0..m_blocks {
            for n in 0..m_blocks {
                full[m][n] = self.sigma_bar_block(m, n);
            }
        }
        let dd = assemble_from(&d, &d, |m, n| {
            full[m][n].view((0, 0), (d[m], d[n])).into_owned()
        });
        let ud = assemble_from(&u, &d, |m, n| {
            full[m][n].view((d[m], 0), (u[m], d[n])).into_owned()
        });
        let uu = assemble_from(&u, &u, |m, n| {
            full[m][n].view((d[m], d[n]), (u[m], u[n])).into_owned()
        });
        (dd, ud, uu)
    }

    fn assemble(
        &mut self,
        rows: &[usize],
        cols: &[usize],
        mut f: impl FnMut(&mut Self, usize, usize) -> DMatrix<f64>,
    ) -> DMatrix<f64> {
        let mut blocks = Vec::with_capacity(rows.len());
        for m in 0..rows.len() {
            let row: Vec<DMatrix<f64>> = (0..cols.len()).map(|n| f(self, m, n)).collect();
            blocks.push(row);
        }
        assemble_from(rows, cols, |m, n| blocks[m][n].clone())
    }
}

fn assemble_from(
    rows: &[usize],
    cols: &[usize],
    f: impl Fn(usize, usize) -> DMatrix<f64>,
) -> DMatrix<f64> {
    let total_r: usize = rows.iter().sum();
    let total_c: usize = cols.iter().sum();
    let mut out = DMatrix::zeros(total_r, total_c);
    let mut ro = 0;
    for (m, &r) in rows.iter().enumerate() {
        let mut co = 0;
        for (n, &c) in cols.iter().enumerate() {
            out.view_mut((ro, co), (r, c)).copy_from(&f(m, n));
            co += c;
        }
        ro += r;
    }
    out
}
