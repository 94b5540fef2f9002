//! Local and global summaries, and the posterior computed from them.

use nalgebra::{DMatrix, DVector};

use super::cross::{cross_blocks_centralized, vstack, CrossBlocks};
use super::LmaSetup;
use crate::baselines::{Covariance, Prediction};
use crate::blockmat::{
    cholesky_jittered_with_context, BlockConditional, JitteredCholesky, ProjectedSet, UpperFactor,
};
use crate::error::{GpError, Result};
use crate::kernel::{gram, Hyperparams, PointSet};

/// Per-block summary: `y_dot`, `R_dot` (kept as the factor of its inverse),
/// `Sigma_dot_S` and `Sigma_dot_U`.
#[derive(Debug, Clone)]
pub struct LocalSummary {
    pub y_dot: DVector<f64>,
    pub schur: UpperFactor,
    pub sigma_s: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
}

/// Which part of `Sigma_dd_UU` a summation term carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UuMode {
    Full,
    /// Diagonal blocks only, given the test block offsets.
    Blocks(Vec<usize>),
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UuTerm {
    Full(DMatrix<f64>),
    Blocks(Vec<DMatrix<f64>>),
    Diagonal(DVector<f64>),
}

impl UuTerm {
    fn zeros_like(&self) -> UuTerm {
        match self {
            UuTerm::Full(m) => UuTerm::Full(DMatrix::zeros(m.nrows(), m.ncols())),
            UuTerm::Blocks(b) => UuTerm::Blocks(
                b.iter()
                    .map(|m| DMatrix::zeros(m.nrows(), m.ncols()))
                    .collect(),
            ),
            UuTerm::Diagonal(d) => UuTerm::Diagonal(DVector::zeros(d.len())),
        }
    }

    fn add_assign(&mut self, other: &UuTerm) -> Result<()> {
        match (self, other) {
            (UuTerm::Full(a), UuTerm::Full(b)) if a.shape() == b.shape() => *a += b,
            (UuTerm::Blocks(a), UuTerm::Blocks(b)) if a.len() == b.len() => {
                for (x, y) in a.iter_mut().zip(b) {
                    if x.shape() != y.shape() {
                        return Err(GpError::invalid("summary block shapes differ"));
                    }
                    *x += y;
                }
            }
            (UuTerm::Diagonal(a), UuTerm::Diagonal(b)) if a.len() == b.len() => *a += b,
            _ => return Err(GpError::invalid("summary test-term shapes differ")),
        }
        Ok(())
    }

    /// Diagonal entries.
    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            UuTerm::Full(m) => m.diagonal(),
            UuTerm::Blocks(b) => {
                let v: Vec<f64> = b
                    .iter()
                    .flat_map(|m| m.diagonal().iter().copied().collect::<Vec<_>>())
                    .collect();
                DVector::from_vec(v)
            }
            UuTerm::Diagonal(d) => d.clone(),
        }
    }
}

/// The `m`-th summation terms of the global summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTerms {
    pub y_s: DVector<f64>,
    pub y_u: DVector<f64>,
    pub ss: DMatrix<f64>,
    pub us: DMatrix<f64>,
    pub uu: UuTerm,
}

impl LocalSummary {
    /// Summation terms `A^T R_dot B` computed as `(W^{-1} A)^T (W^{-1} B)`.
    pub fn terms(&self, mode: &UuMode) -> SummaryTerms {
        let z_y = self.schur.apply_inverse_factor_vec(&self.y_dot);
        let z_s = self.schur.apply_inverse_factor(&self.sigma_s);
        let z_u = self.schur.apply_inverse_factor(&self.sigma_u);
        let uu = match mode {
            UuMode::Full => UuTerm::Full(z_u.tr_mul(&z_u)),
            UuMode::Blocks(off) => UuTerm::Blocks(
                off.windows(2)
                    .map(|w| {
                        let c = z_u.columns(w[0], w[1] - w[0]);
                        c.tr_mul(&c)
                    })
                    .collect(),
            ),
            UuMode::Diagonal => UuTerm::Diagonal(DVector::from_iterator(
                z_u.ncols(),
                z_u.column_iter().map(|c| c.norm_squared()),
            )),
        };
        SummaryTerms {
            y_s: z_s.tr_mul(&z_y),
            y_u: z_u.tr_mul(&z_y),
            ss: z_s.tr_mul(&z_s),
            us: z_u.tr_mul(&z_s),
            uu,
        }
    }
}

/// Builds the `m`-th local summary from the block's conditional and its
/// approximate cross covariances `Sigma_bar_{D_m U}` and `Sigma_bar_{D^B_m U}`.
pub fn local_summary(
    setup: &LmaSetup,
    m: usize,
    cond: &BlockConditional,
    sigma_du: &DMatrix<f64>,
    sigma_band_u: &DMatrix<f64>,
) -> Result<LocalSummary> {
    let parts = BlockData {
        own: setup.train_set(m),
        band: &setup.band_set(m),
        y_own: setup.train_resid(m),
        y_band: &setup.band_resid(m),
    };
    local_summary_from_parts(
        &parts,
        setup.support.points(),
        &setup.h,
        cond,
        sigma_du,
        sigma_band_u,
    )
}

/// What one block knows about its own training data and that of its band.
pub struct BlockData<'a> {
    pub own: &'a ProjectedSet,
    pub band: &'a ProjectedSet,
    /// `y_{D_m} - mu`
    pub y_own: &'a DVector<f64>,
    /// `y_{D^B_m} - mu`
    pub y_band: &'a DVector<f64>,
}

pub fn local_summary_from_parts(
    data: &BlockData<'_>,
    support: &PointSet,
    h: &Hyperparams,
    cond: &BlockConditional,
    sigma_du: &DMatrix<f64>,
    sigma_band_u: &DMatrix<f64>,
) -> Result<LocalSummary> {
    let a = cond.predictor();
    let (own, band) = (data.own, data.band);
    if sigma_du.nrows() != own.len()
        || sigma_band_u.nrows() != band.len()
        || sigma_du.ncols() != sigma_band_u.ncols()
        || data.y_own.len() != own.len()
        || data.y_band.len() != band.len()
    {
        return Err(GpError::invalid(
            "local summary inputs have inconsistent shapes",
        ));
    }
    let mut y_dot = data.y_own.clone();
    let mut sigma_s = gram(own.points(), support, h)?;
    let mut sigma_u = sigma_du.clone();
    if !band.is_empty() {
        y_dot -= a * data.y_band;
        sigma_s -= a * gram(band.points(), support, h)?;
        sigma_u -= a * sigma_band_u;
    }
    Ok(LocalSummary {
        y_dot,
        schur: cond.schur().clone(),
        sigma_s,
        sigma_u,
    })
}

/// Sums of the local terms plus `Sigma_SS`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSummary {
    pub y_s: DVector<f64>,
    pub y_u: DVector<f64>,
    pub ss: DMatrix<f64>,
    pub us: DMatrix<f64>,
    pub uu: UuTerm,
}

impl GlobalSummary {
    /// Adds the terms in the order given; callers pass them by ascending block.
    pub fn reduce<'a>(
        sigma_ss: &DMatrix<f64>,
        terms: impl IntoIterator<Item = &'a SummaryTerms>,
    ) -> Result<Self> {
        let mut iter = terms.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| GpError::invalid("global summary needs at least one local summary"))?;
        if sigma_ss.shape() != first.ss.shape() {
            return Err(GpError::DimensionMismatch {
                expected: sigma_ss.nrows(),
                found: first.ss.nrows(),
            });
        }
        let mut g = GlobalSummary {
            y_s: DVector::zeros(first.y_s.len()),
            y_u: DVector::zeros(first.y_u.len()),
            ss: sigma_ss.clone(),
            us: DMatrix::zeros(first.us.nrows(), first.us.ncols()),
            uu: first.uu.zeros_like(),
        };
        for t in std::iter::once(first).chain(iter) {
            if t.y_s.len() != g.y_s.len()
                || t.y_u.len() != g.y_u.len()
                || t.ss.shape() != g.ss.shape()
                || t.us.shape() != g.us.shape()
            {
                return Err(GpError::invalid("local summary shapes differ"));
            }
            g.y_s += &t.y_s;
            g.y_u += &t.y_u;
            g.ss += &t.ss;
            g.us += &t.us;
            g.uu.add_assign(&t.uu)?;
        }
        Ok(g)
    }

    pub fn factor_ss(&self) -> Result<JitteredCholesky> {
        cholesky_jittered_with_context(&self.ss, "global support summary")
    }
}

/// Sums the local summaries in ascending block order.
pub fn global_summary(
    locals: &[LocalSummary],
    sigma_ss: &DMatrix<f64>,
    mode: &UuMode,
) -> Result<GlobalSummary> {
    let terms: Vec<SummaryTerms> = locals.iter().map(|l| l.terms(mode)).collect();
    GlobalSummary::reduce(sigma_ss, &terms)
}

/// Posterior for one group of test points from the pieces of the global summary
/// that concern it: `mu + y_dd_U - Sigma_dd_US Sigma_dd_SS^{-1} y_dd_S` and
/// `prior - Sigma_dd_UU + Sigma_dd_US Sigma_dd_SS^{-1} Sigma_dd_SU`.
pub fn posterior_from_summary(
    prior_mean: f64,
    ss_chol: &JitteredCholesky,
    y_s: &DVector<f64>,
    y_u: &DVector<f64>,
    us: &DMatrix<f64>,
    prior_uu: &Covariance,
    uu: &Covariance,
) -> Result<(DVector<f64>, Covariance)> {
    let w = ss_chol.solve_lower(&DMatrix::from_column_slice(y_s.len(), 1, y_s.as_slice()));
    let v = ss_chol.solve_lower(&us.transpose());
    let mean = (y_u - v.tr_mul(&w).column(0)).add_scalar(prior_mean);
    let cov = match (prior_uu, uu) {
        (Covariance::Full(p), Covariance::Full(t)) => {
            let mut c = p - t;
            c.gemm_tr(1.0, &v, &v, 1.0);
            Covariance::Full(c)
        }
        (Covariance::Diagonal(p), Covariance::Diagonal(t)) => {
            Covariance::Diagonal(DVector::from_iterator(
                p.len(),
                v.column_iter()
                    .zip(p.iter().zip(t.iter()))
                    .map(|(c, (p, t))| p - t + c.norm_squared()),
            ))
        }
        _ => {
            return Err(GpError::invalid(
                "prior and summary covariance kinds differ",
            ))
        }
    };
    Ok((mean, cov))
}

/// Summary-form LMA on a prepared setup; cross blocks computed centrally.
pub fn predict_summary_with_setup(setup: &LmaSetup, want_cov: bool) -> Result<Prediction> {
    if setup.bandwidth == 0 {
        return Err(GpError::invalid(
            "summary form requires Markov order at least 1",
        ));
    }
    let conds = setup.conditionals()?;
    let cross = cross_blocks_centralized(setup, &conds);
    predict_from_cross(setup, &conds, &cross, want_cov)
}

pub(crate) fn predict_from_cross(
    setup: &LmaSetup,
    conds: &[BlockConditional],
    cross: &CrossBlocks,
    want_cov: bool,
) -> Result<Prediction> {
    let m_blocks = setup.num_blocks();
    let sigma_du: Vec<DMatrix<f64>> = (0..m_blocks)
        .map(|k| cross.sigma_bar_du(setup, k))
        .collect();
    let n_u = setup.partition.num_test();
    let mode = if want_cov {
        UuMode::Full
    } else {
        UuMode::Diagonal
    };
    let mut terms = Vec::with_capacity(m_blocks);
    for m in 0..m_blocks {
        let band: Vec<&DMatrix<f64>> = setup
            .partition
            .band(m, setup.bandwidth)
            .map(|j| &sigma_du[j])
            .collect();
        let band_u = vstack(&band, n_u);
        let local =
            local_summary(setup, m, &conds[m], &sigma_du[m], &band_u).map_err(|e| e.in_block(m))?;
        terms.push(local.terms(&mode));
    }
    let global = GlobalSummary::reduce(&setup.support.covariance(&setup.h), &terms)?;
    let ss_chol = global.factor_ss()?;
    let (prior, uu) = if want_cov {
        let UuTerm::Full(t) = &global.uu else {
            unreachable!("full mode")
        };
        (
            Covariance::Full(cross.prior_uu_full(setup, conds)),
            Covariance::Full(t.clone()),
        )
    } else {
        (
            Covariance::Diagonal(DVector::from_element(n_u, setup.h.prior_var())),
            Covariance::Diagonal(global.uu.diagonal()),
        )
    };
    let (mean, cov) = posterior_from_summary(
        setup.h.prior_mean,
        &ss_chol,
        &global.y_s,
        &global.y_u,
        &global.us,
        &prior,
        &uu,
    )?;
    let jitter = conds
        .iter()
        .map(BlockConditional::max_jitter)
        .fold(setup.support.jitter().max(ss_chol.jitter()), f64::max);
    Ok(Prediction::from_block_order(
        mean,
        cov,
        jitter,
        &setup.partition.test_order(),
    ))
}
