use nalgebra::DMatrix;

use crate::error::{GpError, Result};

/// `0.5 (tr(R Rhat^{-1}) - ln|R Rhat^{-1}| - n)` between two positive definite
/// matrices, from Cholesky factors of both (no jitter is applied).
pub fn kl_distance(r: &DMatrix<f64>, rhat: &DMatrix<f64>) -> Result<f64> {
    if !r.is_square() || r.shape() != rhat.shape() {
        return Err(GpError::DimensionMismatch {
            expected: r.nrows(),
            found: rhat.nrows(),
        });
    }
    let n = r.nrows();
    let lr =
        nalgebra::linalg::Cholesky::new(r.clone()).ok_or_else(|| GpError::NotPositiveDefinite {
            context: "KL reference matrix".into(),
            jitter: 0.0,
        })?;
    let lh = nalgebra::linalg::Cholesky::new(rhat.clone()).ok_or_else(|| {
        GpError::NotPositiveDefinite {
            context: "KL approximating matrix".into(),
            jitter: 0.0,
        }
    })?;
    // tr(R Rhat^{-1}) = || Lh^{-1} Lr ||_F^2
    let m = lh
        .l_dirty()
        .solve_lower_triangular(&lr.l())
        .expect("positive diagonal");
    let trace = m.norm_squared();
    let ln_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_ratio = ln_det(&lr.l()) - ln_det(&lh.l());
    Ok(0.5 * (trace - log_ratio - n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, shift: f64, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let a = DMatrix::from_fn(n, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        });
        &a * a.transpose() + DMatrix::identity(n, n) * shift
    }

    #[test]
    fn zero_for_identical() {
        let r = spd(5, 0.3, 1);
        assert!(kl_distance(&r, &r).unwrap().abs() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let r = DMatrix::from_element(1, 1, 2.0);
        let rhat = DMatrix::from_element(1, 1, 1.0);
        let kl = kl_distance(&r, &rhat).unwrap();
        let expected = 0.5 * (2.0 - 2f64.ln() - 1.0);
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.153_426_4).abs() < 1e-7);
    }

    #[test]
    fn matches_dense_formula() {
        let r = spd(4, 0.5, 7);
        let rhat = spd(4, 0.8, 8);
        let inv = rhat.clone().try_inverse().unwrap();
        let prod = &r * inv;
        let direct = 0.5 * (prod.trace() - prod.determinant().ln() - 4.0);
        let kl = kl_distance(&r, &rhat).unwrap();
        assert!((kl - direct).abs() < 1e-12, "{kl} vs {direct}");
        assert!(kl > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = spd(3, 0.5, 2);
        assert!(kl_distance(&r, &spd(4, 0.5, 2)).is_err());
        let neg = -DMatrix::<f64>::identity(3, 3);
        assert!(kl_distance(&r, &neg).is_err());
    }
}
