//! Full-rank GP and PIC predictors.
//!
//! [`fgp_predict`] is exact and costs `O(|D|^3)`. [`pic_predict_direct`] assembles
//! the PIC prior densely (residual kept only on diagonal blocks) and is meant for
//! small instances and cross-checks; [`pic_predict`] computes the same posterior
//! from per-block summaries without forming any `|D| x |D|` matrix.

use nalgebra::{DMatrix, DVector};

use crate::blockmat::{cholesky_jittered_with_context, residual, ProjectedSet, Support};
use crate::data::{Dataset, Inputs};
use crate::error::{GpError, Result};
use crate::kernel::{gram, Hyperparams, PointSet};
use crate::partition::{BlockPartition, SupportSet};

/// Posterior covariance, either the full matrix or only its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

/// Posterior over the test points, in the order the test inputs were given.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub cov: Covariance,
    /// Largest diagonal jitter any factorization needed.
    pub jitter: f64,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self) -> DVector<f64> {
        match &self.cov {
            Covariance::Diagonal(d) => d.clone(),
            Covariance::Full(c) => c.diagonal(),
        }
    }

    pub fn full_cov(&self) -> Option<&DMatrix<f64>> {
        match &self.cov {
            Covariance::Full(c) => Some(c),
            Covariance::Diagonal(_) => None,
        }
    }

    /// Reorders a prediction made in block order back to the caller's test order.
    pub(crate) fn from_block_order(
        mean: DVector<f64>,
        cov: Covariance,
        jitter: f64,
        order: &[usize],
    ) -> Prediction {
        let n = order.len();
        let mut out_mean = DVector::zeros(n);
        for (pos, &j) in order.iter().enumerate() {
            out_mean[j] = mean[pos];
        }
        let cov = match cov {
            Covariance::Diagonal(d) => {
                let mut out = DVector::zeros(n);
                for (pos, &j) in order.iter().enumerate() {
                    out[j] = d[pos];
                }
                Covariance::Diagonal(out)
            }
            Covariance::Full(c) => {
                let mut out = DMatrix::zeros(n, n);
                for (p, &i) in order.iter().enumerate() {
                    for (q, &j) in order.iter().enumerate() {
                        out[(i, j)] = c[(p, q)];
                    }
                }
                Covariance::Full(out)
            }
        };
        Prediction {
            mean: out_mean,
            cov,
            jitter,
        }
    }
}

pub(crate) fn centered(y: &[f64], mean: f64) -> DVector<f64> {
    DVector::from_iterator(y.len(), y.iter().map(|v| v - mean))
}

fn check_inputs(train: &Dataset, test: &Inputs, h: &Hyperparams) -> Result<()> {
    if train.is_empty() {
        return Err(GpError::invalid("training set is empty"));
    }
    h.check_dim(train.dim())?;
    if !test.is_empty() {
        h.check_dim(test.dim())?;
    }
    Ok(())
}

/// Exact GP posterior; `O(|D|^3)` time and `O(|D|^2)` memory.
pub fn fgp_predict(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    want_cov: bool,
) -> Result<Prediction> {
    check_inputs(train, test, h)?;
    let d = PointSet::all_train(&train.inputs);
    let u = PointSet::all_test(test);
    let k_dd = gram(&d, &d, h)?;
    let chol = cholesky_jittered_with_context(&k_dd, "training covariance")?;
    let k_du = gram(&d, &u, h)?;
    let resid = centered(&train.outputs, h.prior_mean);
    let alpha = chol.solve_vec(&resid);
    let mean = k_du.tr_mul(&alpha).add_scalar(h.prior_mean);
    let v = chol.solve_lower(&k_du);
    let cov = if want_cov {
        let mut c = gram(&u, &u, h)?;
        c.gemm_tr(-1.0, &v, &v, 1.0);
        Covariance::Full(c)
    } else {
        Covariance::Diagonal(DVector::from_iterator(
            u.len(),
            v.column_iter().map(|c| h.prior_var() - c.norm_squared()),
        ))
    };
    Ok(Prediction {
        mean,
        cov,
        jitter: chol.jitter(),
    })
}

/// PIC posterior from the densely assembled PIC prior. Small instances only.
pub fn pic_predict_direct(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    support: &SupportSet,
    partition: &BlockPartition,
    want_cov: bool,
) -> Result<Prediction> {
    check_inputs(train, test, h)?;
    let (sigma_dd, sigma_ud, sigma_uu, jitter0) =
        pic_prior_dense(train, test, h, support, partition)?;
    let order_d = partition.train_order();
    let y: Vec<f64> = order_d.iter().map(|&i| train.outputs[i]).collect();
    let chol = cholesky_jittered_with_context(&sigma_dd, "PIC training covariance")?;
    let alpha = chol.solve_vec(&centered(&y, h.prior_mean));
    let mean = (&sigma_ud * alpha).add_scalar(h.prior_mean);
    let v = chol.solve_lower(&sigma_ud.transpose());
    let cov = if want_cov {
        let mut c = sigma_uu;
        c.gemm_tr(-1.0, &v, &v, 1.0);
        Covariance::Full(c)
    } else {
        Covariance::Diagonal(DVector::from_iterator(
            v.ncols(),
            v.column_iter()
                .zip(sigma_uu.diagonal().iter())
                .map(|(c, p)| p - c.norm_squared()),
        ))
    };
    Ok(Prediction::from_block_order(
        mean,
        cov,
        jitter0.max(chol.jitter()),
        &partition.test_order(),
    ))
}

/// `(Sigma_DD, Sigma_UD, Sigma_UU, jitter)`.
pub type DensePrior = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64);

/// Dense PIC prior blocks `(Sigma_DD, Sigma_UD, Sigma_UU)` in block order: the
/// reduced-rank part everywhere plus the exact residual on diagonal blocks.
pub fn pic_prior_dense(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    support: &SupportSet,
    partition: &BlockPartition,
) -> Result<DensePrior> {
    let support = Support::from_training(&train.inputs, support, h)?;
    let d_sets: Vec<ProjectedSet> = partition
        .train_blocks()
        .iter()
        .map(|b| support.project(PointSet::train(&train.inputs, b), h))
        .collect::<Result<_>>()?;
    let u_sets: Vec<ProjectedSet> = partition
        .test_blocks()
        .iter()
        .map(|b| support.project(PointSet::test(test, b), h))
        .collect::<Result<_>>()?;
    let dim = train.dim();
    let all_d = ProjectedSet::concat(&d_sets, dim, support.len());
    let all_u = ProjectedSet::concat(&u_sets, dim, support.len());
    let mut sigma_dd = all_d.phi().tr_mul(all_d.phi());
    let mut sigma_ud = all_u.phi().tr_mul(all_d.phi());
    let mut sigma_uu = all_u.phi().tr_mul(all_u.phi());
    let (mut od, mut ou) = (0, 0);
    for (d, u) in d_sets.iter().zip(&u_sets) {
        let (nd, nu) = (d.len(), u.len());
        let mut b = sigma_dd.view_mut((od, od), (nd, nd));
        b += residual(d, d, h);
        let mut b = sigma_ud.view_mut((ou, od), (nu, nd));
        b += residual(u, d, h);
        let mut b = sigma_uu.view_mut((ou, ou), (nu, nu));
        b += residual(u, u, h);
        od += nd;
        ou += nu;
    }
    Ok((sigma_dd, sigma_ud, sigma_uu, support.jitter()))
}

/// PIC posterior from per-block summaries; cost is `O(|D| |S|^2 + |D|^3 / M^2)`
/// plus the test-dependent terms.
pub fn pic_predict(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    support: &SupportSet,
    partition: &BlockPartition,
    want_cov: bool,
) -> Result<Prediction> {
    check_inputs(train, test, h)?;
    let support = Support::from_training(&train.inputs, support, h)?;
    let s_len = support.len();
    let dim = train.dim();
    let u_sets: Vec<ProjectedSet> = partition
        .test_blocks()
        .iter()
        .map(|b| support.project(PointSet::test(test, b), h))
        .collect::<Result<_>>()?;
    let all_u = ProjectedSet::concat(&u_sets, dim, s_len);
    let n_u = all_u.len();
    let u_off = partition.test_offsets();

    let mut jitter = support.jitter();
    let mut y_s = DVector::zeros(s_len);
    let mut y_u = DVector::zeros(n_u);
    let mut ss = support.covariance(h);
    let mut us = DMatrix::zeros(n_u, s_len);
    let mut uu = DMatrix::zeros(n_u, n_u);
    let mut uu_diag: DVector<f64> = DVector::zeros(n_u);

    for (m, block) in partition.train_blocks().iter().enumerate() {
        let d = support.project(PointSet::train(&train.inputs, block), h)?;
        let r_mm = residual(&d, &d, h);
        let chol = cholesky_jittered_with_context(&r_mm, "PIC block residual")
            .map_err(|e| e.in_block(m))?;
        jitter = jitter.max(chol.jitter());
        // Sigma_{D_m S}, Sigma_bar_{D_m U}
        let k_ds = gram(d.points(), support.points(), h)?;
        let mut sb_du = d.phi().tr_mul(all_u.phi());
        let mut own = sb_du.columns_mut(u_off[m], u_off[m + 1] - u_off[m]);
        own += residual(&d, &u_sets[m], h);

        let y: Vec<f64> = block.iter().map(|&i| train.outputs[i]).collect();
        let z_y = chol.solve_lower(&DMatrix::from_column_slice(
            y.len(),
            1,
            centered(&y, h.prior_mean).as_slice(),
        ));
        let z_s = chol.solve_lower(&k_ds);
        let z_u = chol.solve_lower(&sb_du);
        y_s += z_s.tr_mul(&z_y).column(0);
        y_u += z_u.tr_mul(&z_y).column(0);
        ss += z_s.tr_mul(&z_s);
        us += z_u.tr_mul(&z_s);
        if want_cov {
            uu += z_u.tr_mul(&z_u);
        } else {
            for (j, c) in z_u.column_iter().enumerate() {
                uu_diag[j] += c.norm_squared();
            }
        }
    }

    let chol_ss = cholesky_jittered_with_context(&ss, "global support summary")?;
    jitter = jitter.max(chol_ss.jitter());
    let w = chol_ss.solve_lower(&DMatrix::from_column_slice(s_len, 1, y_s.as_slice()));
    let v = chol_ss.solve_lower(&us.transpose());
    let mean = (y_u - v.tr_mul(&w).column(0)).add_scalar(h.prior_mean);
    let cov = if want_cov {
        // PIC prior over the test blocks
        let mut prior = all_u.phi().tr_mul(all_u.phi());
        for (m, u) in u_sets.iter().enumerate() {
            let mut b = prior.view_mut((u_off[m], u_off[m]), (u.len(), u.len()));
            b += residual(u, u, h);
        }
        let mut c = prior - uu;
        c.gemm_tr(1.0, &v, &v, 1.0);
        Covariance::Full(c)
    } else {
        Covariance::Diagonal(DVector::from_iterator(
            n_u,
            v.column_iter()
                .zip(uu_diag.iter())
                .map(|(c, q)| h.prior_var() - q + c.norm_squared()),
        ))
    };
    Ok(Prediction::from_block_order(
        mean,
        cov,
        jitter,
        &partition.test_order(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{partition_inputs, select_support};

    fn toy(n: usize) -> (Dataset, Inputs, Hyperparams) {
        let xs: Vec<f64> = (0..n)
            .map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 1.0 + x.cos() + 0.05 * (7.0 * x).sin())
            .collect();
        let train = Dataset::new(Inputs::from_scalars(&xs).unwrap(), ys).unwrap();
        let test = Inputs::from_scalars(&[-2.9, -1.0, 0.05, 0.5, 2.2, 2.95]).unwrap();
        (
            train,
            test,
            Hyperparams::isotropic(0.5, 0.01, 1.0, 1, 1.0).unwrap(),
        )
    }

    #[test]
    fn noiseless_interpolation() {
        let h = Hyperparams::isotropic(1.0, 0.0, 0.8, 1, 0.3).unwrap();
        let train = Dataset::new(
            Inputs::from_scalars(&[-1.0, 0.0, 1.5]).unwrap(),
            vec![0.2, -0.4, 1.1],
        )
        .unwrap();
        let test = Inputs::from_scalars(&[0.0]).unwrap();
        let p = fgp_predict(&train, &test, &h, true).unwrap();
        assert!((p.mean[0] + 0.4).abs() < 1e-9);
        assert!(p.variance()[0].abs() < 1e-9);
    }

    #[test]
    fn empty_test_set() {
        let (train, _, h) = toy(10);
        let p = fgp_predict(&train, &Inputs::empty(1), &h, true).unwrap();
        assert!(p.is_empty());
        let part = partition_inputs(&train.inputs, &Inputs::empty(1), 2).unwrap();
        let s = select_support(&train.inputs, 3, 1).unwrap();
        assert!(pic_predict(&train, &Inputs::empty(1), &h, &s, &part, false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn variance_contracts() {
        let (train, test, h) = toy(25);
        let p = fgp_predict(&train, &test, &h, false).unwrap();
        for v in p.variance().iter() {
            assert!(*v <= h.prior_var() + 1e-8 && *v >= -1e-8);
        }
    }

    #[test]
    fn pic_single_block_is_fgp() {
        let (train, test, h) = toy(20);
        let part = partition_inputs(&train.inputs, &test, 1).unwrap();
        let s = select_support(&train.inputs, 4, 9).unwrap();
        let fgp = fgp_predict(&train, &test, &h, true).unwrap();
        let pic = pic_predict_direct(&train, &test, &h, &s, &part, true).unwrap();
        assert!((&fgp.mean - &pic.mean).amax() < 1e-8);
        assert!((fgp.full_cov().unwrap() - pic.full_cov().unwrap()).amax() < 1e-8);
    }

    #[test]
    fn pic_summary_matches_direct() {
        let (train, test, h) = toy(40);
        let part = partition_inputs(&train.inputs, &test, 4).unwrap();
        let s = select_support(&train.inputs, 5, 2).unwrap();
        for want_cov in [false, true] {
            let a = pic_predict_direct(&train, &test, &h, &s, &part, want_cov).unwrap();
            let b = pic_predict(&train, &test, &h, &s, &part, want_cov).unwrap();
            assert!((&a.mean - &b.mean).amax() < 1e-8);
            assert!((a.variance() - b.variance()).amax() < 1e-8);
            if want_cov {
                assert!((a.full_cov().unwrap() - b.full_cov().unwrap()).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn pic_prior_off_diagonal_is_reduced_rank() {
        let (train, test, h) = toy(40);
        let part = partition_inputs(&train.inputs, &test, 4).unwrap();
        let s = select_support(&train.inputs, 5, 2).unwrap();
        let (sigma_dd, _, _, _) = pic_prior_dense(&train, &test, &h, &s, &part).unwrap();
        let support = Support::from_training(&train.inputs, &s, &h).unwrap();
        let b1 = PointSet::train(&train.inputs, part.train_block(0));
        let b3 = PointSet::train(&train.inputs, part.train_block(2));
        let q = crate::blockmat::q_matrix(&b1, &b3, &support, &h).unwrap();
        let off = part.train_offsets();
        let block = sigma_dd.view((off[0], off[2]), (10, 10));
        assert!((block - q).amax() < 1e-14);
    }

    #[test]
    fn dimension_errors() {
        let (train, _, h) = toy(10);
        let bad = Inputs::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(fgp_predict(&train, &bad, &h, false).is_err());
    }
}
