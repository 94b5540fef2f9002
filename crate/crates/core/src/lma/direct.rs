//! Dense reference predictor: assemble `Sigma_bar` over `D ∪ U` and solve.

use nalgebra::DVector;

use super::rbar::RbarTable;
use super::{LmaConfig, LmaSetup};
use crate::baselines::{Covariance, Prediction};
use crate::blockmat::cholesky_jittered_with_context;
use crate::data::{Dataset, Inputs};
use crate::error::Result;
use crate::kernel::Hyperparams;

/// LMA posterior from the densely assembled approximate prior. `O(|D|^3)`.
pub fn lma_predict_direct(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    config: &LmaConfig,
    want_cov: bool,
) -> Result<Prediction> {
    let setup = LmaSetup::new(train, test, h, config)?;
    predict_direct_with_setup(&setup, want_cov)
}

pub fn predict_direct_with_setup(setup: &LmaSetup, want_cov: bool) -> Result<Prediction> {
    let mut table = RbarTable::new(setup)?;
    let (dd, ud, uu) = table.sigma_bar_dense();
    let chol = cholesky_jittered_with_context(&dd, "approximate training covariance")?;
    let y: Vec<f64> = (0..setup.num_blocks())
        .flat_map(|m| setup.train_resid(m).iter().copied().collect::<Vec<_>>())
        .collect();
    let alpha = chol.solve_vec(&DVector::from_vec(y));
    let mean = (&ud * alpha).add_scalar(setup.h.prior_mean);
    let v = chol.solve_lower(&ud.transpose());
    let cov = if want_cov {
        Covariance::Full(uu - v.tr_mul(&v))
    } else {
        Covariance::Diagonal(DVector::from_iterator(
            v.ncols(),
            v.column_iter()
                .zip(uu.diagonal().iter())
                .map(|(c, p)| p - c.norm_squared()),
        ))
    };
    let jitter = setup
        .support
        .jitter()
        .max(table.max_jitter())
        .max(chol.jitter());
    Ok(Prediction::from_block_order(
        mean,
        cov,
        jitter,
        &setup.partition.test_order(),
    ))
}
