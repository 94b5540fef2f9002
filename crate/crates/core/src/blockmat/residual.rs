//! Reduced-rank projection onto a support set and the residual covariance it
//! leaves behind.
//!
//! With `L L^T = Sigma_SS`, every point set `A` gets whitened features
//! `phi_A = L^{-1} Sigma_SA`, so `Q_AB = phi_A^T phi_B` and `R_AB = Sigma_AB - Q_AB`.

use nalgebra::DMatrix;

use super::cholesky::{cholesky_jittered_with_context, JitteredCholesky, UpperFactor};
use super::symmetrize;
use crate::data::Inputs;
use crate::error::{GpError, Result};
use crate::kernel::{gram, gram_unchecked, Hyperparams, PointSet};
use crate::partition::SupportSet;

/// A support set with the factorization of its covariance.
#[derive(Debug, Clone)]
pub struct Support {
    points: PointSet,
    chol: JitteredCholesky,
}

impl Support {
    pub fn new(points: PointSet, h: &Hyperparams) -> Result<Self> {
        if points.is_empty() {
            return Err(GpError::invalid("support set must not be empty"));
        }
        let k = gram(&points, &points, h)?;
        let chol = cholesky_jittered_with_context(&k, "support covariance")?;
        Ok(Support { points, chol })
    }

    /// Support points placed at training inputs. Each has its own noise term;
    /// sharing noise with the colocated observation would make `R_DD` singular.
    pub fn from_training(train: &Inputs, set: &SupportSet, h: &Hyperparams) -> Result<Self> {
        Support::new(PointSet::support(train, &set.indices), h)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn chol(&self) -> &JitteredCholesky {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    /// `Sigma_SS` (without jitter).
    pub fn covariance(&self, h: &Hyperparams) -> DMatrix<f64> {
        gram_unchecked(&self.points, &self.points, h)
    }

    /// `L^{-1} Sigma_{S,x}`, shape `|S| x |x|`.
    pub fn whiten(&self, x: &PointSet, h: &Hyperparams) -> Result<DMatrix<f64>> {
        let k = gram(&self.points, x, h)?;
        Ok(self.chol.solve_lower(&k))
    }

    pub fn project(&self, x: PointSet, h: &Hyperparams) -> Result<ProjectedSet> {
        let phi = self.whiten(&x, h)?;
        Ok(ProjectedSet { points: x, phi })
    }
}

/// A point set together with its whitened support features.
#[derive(Debug, Clone)]
pub struct ProjectedSet {
    points: PointSet,
    phi: DMatrix<f64>,
}

impl ProjectedSet {
    pub fn concat<'a>(
        parts: impl IntoIterator<Item = &'a ProjectedSet> + Clone,
        dim: usize,
        support_len: usize,
    ) -> ProjectedSet {
        let points = PointSet::concat(parts.clone().into_iter().map(|p| &p.points), dim);
        let mut phi = DMatrix::zeros(support_len, points.len());
        let mut col = 0;
        for p in parts {
            let w = p.phi.ncols();
            phi.columns_mut(col, w).copy_from(&p.phi);
            col += w;
        }
        ProjectedSet { points, phi }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
}

/// `R_AB = Sigma_AB - Q_AB` for two projected sets.
pub fn residual(a: &ProjectedSet, b: &ProjectedSet, h: &Hyperparams) -> DMatrix<f64> {
    let mut k = gram_unchecked(&a.points, &b.points, h);
    k.gemm_tr(-1.0, &a.phi, &b.phi, 1.0);
    k
}

/// `Q_{B1 B2} = Sigma_{B1 S} Sigma_SS^{-1} Sigma_{S B2}`.
pub fn q_matrix(
    b1: &PointSet,
    b2: &PointSet,
    support: &Support,
    h: &Hyperparams,
) -> Result<DMatrix<f64>> {
    let p1 = support.whiten(b1, h)?;
    let p2 = support.whiten(b2, h)?;
    Ok(p1.transpose() * p2)
}

/// `R_{B1 B2} = Sigma_{B1 B2} - Q_{B1 B2}`.
pub fn r_matrix(
    b1: &PointSet,
    b2: &PointSet,
    support: &Support,
    h: &Hyperparams,
) -> Result<DMatrix<f64>> {
    let q = q_matrix(b1, b2, support, h)?;
    Ok(gram(b1, b2, h)? - q)
}

/// Conditioning of a block's residual on the residuals of the next `B` blocks.
#[derive(Debug, Clone)]
pub struct BlockConditional {
    band_chol: JitteredCholesky,
    predictor: DMatrix<f64>,
    schur: UpperFactor,
}

/// Builds the conditional of block `own` given `band` (`D^B_m`, possibly empty):
/// `R' = R_{own,band} R_{band,band}^{-1}` and the Schur complement
/// `R_{own,own} - R' R_{band,own}`, whose inverse is `R_dot_m`.
pub fn block_conditional(
    own: &ProjectedSet,
    band: &ProjectedSet,
    h: &Hyperparams,
) -> Result<BlockConditional> {
    let r_bb = residual(band, band, h);
    let band_chol = cholesky_jittered_with_context(&r_bb, "band residual covariance")?;
    let r_bm = residual(band, own, h);
    let predictor = band_chol.solve(&r_bm).transpose();
    let mut schur = residual(own, own, h);
    if !band.is_empty() {
        schur.gemm(-1.0, &predictor, &r_bm, 1.0);
        symmetrize(&mut schur);
    }
    let schur = UpperFactor::new(&schur, "conditional residual covariance")?;
    Ok(BlockConditional {
        band_chol,
        predictor,
        schur,
    })
}

impl BlockConditional {
    /// `R_{own, band} R_{band,band}^{-1}`, shape `|D_m| x |D^B_m|`.
    pub fn predictor(&self) -> &DMatrix<f64> {
        &self.predictor
    }

    /// `R_{rows, band} R_{band,band}^{-1}` for arbitrary rows of the same block.
    pub fn predictor_for(
        &self,
        rows: &ProjectedSet,
        band: &ProjectedSet,
        h: &Hyperparams,
    ) -> DMatrix<f64> {
        let r_br = residual(band, rows, h);
        self.band_chol.solve(&r_br).transpose()
    }

    pub fn band_len(&self) -> usize {
        self.predictor.ncols()
    }

    pub fn schur(&self) -> &UpperFactor {
        &self.schur
    }

    /// `R_dot_m` materialized; meant for inspection and tests.
    pub fn r_dot(&self) -> DMatrix<f64> {
        self.schur.inverse()
    }

    pub fn max_jitter(&self) -> f64 {
        self.band_chol.jitter().max(self.schur.jitter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::max_abs;
    use crate::kernel::PointId;
    use nalgebra::SymmetricEigen;

    fn setup() -> (Inputs, Hyperparams) {
        let x = Inputs::from_rows(&[
            vec![0.0, 0.0],
            vec![0.3, 0.1],
            vec![0.9, -0.4],
            vec![1.4, 0.8],
            vec![-0.7, 0.5],
            vec![2.0, 2.0],
        ])
        .unwrap();
        (x, Hyperparams::new(1.2, 0.05, vec![0.8, 1.1], 0.0).unwrap())
    }

    #[test]
    fn projection_is_identity_on_support() {
        let (x, h) = setup();
        let s = PointSet::train(&x, &[1, 3, 4]);
        let support = Support::new(s.clone(), &h).unwrap();
        let q = q_matrix(&s, &s, &support, &h).unwrap();
        let k = gram(&s, &s, &h).unwrap();
        assert!(max_abs(&(q - &k)) < 1e-12);
        let r = r_matrix(&s, &s, &support, &h).unwrap();
        assert!(max_abs(&r) < 1e-12);
    }

    #[test]
    fn single_support_point_closed_form() {
        let (x, h) = setup();
        let support = Support::new(PointSet::train(&x, &[0]), &h).unwrap();
        let b = PointSet::train(&x, &[2]);
        let q = q_matrix(&b, &b, &support, &h).unwrap();
        let k_xs = crate::kernel::kernel_eval(x.row(2), x.row(0), false, &h).unwrap();
        let k_ss = h.signal_var + h.noise_var;
        assert!((q[(0, 0)] - k_xs * k_xs / k_ss).abs() < 1e-14);
    }

    #[test]
    fn matches_explicit_inverse() {
        let (x, h) = setup();
        let s = PointSet::train(&x, &[0, 2, 5]);
        let all = PointSet::all_train(&x);
        let support = Support::new(s.clone(), &h).unwrap();
        let q = q_matrix(&all, &all, &support, &h).unwrap();
        let k_as = gram(&all, &s, &h).unwrap();
        let k_ss_inv = gram(&s, &s, &h).unwrap().try_inverse().unwrap();
        let oracle = &k_as * k_ss_inv * k_as.transpose();
        assert!(max_abs(&(q - oracle)) < 1e-10);
    }

    #[test]
    fn residual_is_psd() {
        let (x, h) = setup();
        let support = Support::new(PointSet::train(&x, &[0, 3]), &h).unwrap();
        let b = PointSet::train(&x, &[1, 2, 3, 4, 5]);
        let r = r_matrix(&b, &b, &support, &h).unwrap();
        let eig = SymmetricEigen::new(r);
        assert!(eig.eigenvalues.iter().all(|e| *e >= -1e-10));
    }

    #[test]
    fn empty_support_is_rejected() {
        let (_, h) = setup();
        assert!(matches!(
            Support::new(PointSet::empty(2), &h),
            Err(GpError::InvalidArgument(_))
        ));
    }

    #[test]
    fn projected_residual_matches_r_matrix() {
        let (x, h) = setup();
        let support = Support::new(PointSet::train(&x, &[0, 3]), &h).unwrap();
        let a = support.project(PointSet::train(&x, &[1, 2]), &h).unwrap();
        let t = Inputs::from_rows(&[vec![0.2, 0.2]]).unwrap();
        let b = support.project(PointSet::test(&t, &[0]), &h).unwrap();
        let ab = ProjectedSet::concat([&a, &b], 2, 2);
        assert_eq!(
            ab.points().ids(),
            &[PointId::Train(1), PointId::Train(2), PointId::Test(0)]
        );
        let r1 = residual(&ab, &ab, &h);
        let r2 = r_matrix(ab.points(), ab.points(), &support, &h).unwrap();
        assert!(max_abs(&(r1 - r2)) < 1e-14);
    }

    #[test]
    fn conditional_schur_complement() {
        let (x, h) = setup();
        let support = Support::new(PointSet::train(&x, &[4]), &h).unwrap();
        let own = support.project(PointSet::train(&x, &[0, 1]), &h).unwrap();
        let band = support
            .project(PointSet::train(&x, &[2, 3, 5]), &h)
            .unwrap();
        let c = block_conditional(&own, &band, &h).unwrap();

        let r_mm = residual(&own, &own, &h);
        let r_mb = residual(&own, &band, &h);
        let r_bb_inv = residual(&band, &band, &h).try_inverse().unwrap();
        let schur = &r_mm - &r_mb * &r_bb_inv * r_mb.transpose();
        assert!(max_abs(&(c.predictor() - &r_mb * &r_bb_inv)) < 1e-10);
        assert!(max_abs(&(c.r_dot().try_inverse().unwrap() - schur)) < 1e-10);
    }

    #[test]
    fn conditional_with_empty_band() {
        let (x, h) = setup();
        let support = Support::new(PointSet::train(&x, &[4]), &h).unwrap();
        let own = support.project(PointSet::train(&x, &[0, 1]), &h).unwrap();
        let band = support.project(PointSet::empty(2), &h).unwrap();
        let c = block_conditional(&own, &band, &h).unwrap();
        assert_eq!(c.predictor().shape(), (2, 0));
        let r_inv = residual(&own, &own, &h).try_inverse().unwrap();
        assert!(max_abs(&(c.r_dot() - r_inv)) < 1e-10);
    }
}
