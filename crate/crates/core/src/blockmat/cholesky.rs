use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};

/// First non-zero jitter, relative to the mean diagonal entry.
pub const JITTER_START: f64 = 1e-10;
/// Jitter multiplier between retries.
pub const JITTER_GROWTH: f64 = 10.0;
/// Retries after the jitter-free attempt.
pub const JITTER_MAX_RETRIES: usize = 6;

/// Lower Cholesky factor `L` with `L L^T = A + jitter * I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<JitteredCholesky> {
    cholesky_jittered_with_context(a, "matrix")
}

/// Cholesky with the diagonal jitter ladder `0, s, 10 s, ..., 10^5 s` where
/// `s = 1e-10 * mean(diag(A))`. Only the lower triangle of `a` is read.
pub fn cholesky_jittered_with_context(a: &DMatrix<f64>, context: &str) -> Result<JitteredCholesky> {
    if !a.is_square() {
        return Err(GpError::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(JitteredCholesky {
            l: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    let mean_diag = a.diagonal().sum() / n as f64;
    let base = if mean_diag > 0.0 && mean_diag.is_finite() {
        JITTER_START * mean_diag
    } else {
        JITTER_START
    };
    let mut jitter = 0.0;
    for attempt in 0..=JITTER_MAX_RETRIES {
        if attempt > 0 {
            jitter = base * JITTER_GROWTH.powi(attempt as i32 - 1);
        }
        let mut shifted = a.clone();
        if jitter > 0.0 {
            for i in 0..n {
                shifted[(i, i)] += jitter;
            }
        }
        if let Some(chol) = nalgebra::linalg::Cholesky::new(shifted) {
            let l = chol.unpack();
            if l.iter().all(|v| v.is_finite()) {
                return Ok(JitteredCholesky { l, jitter });
            }
        }
    }
    Err(GpError::NotPositiveDefinite {
        context: context.to_string(),
        jitter,
    })
}

impl JitteredCholesky {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim() == 0 {
            return DMatrix::zeros(0, b.ncols());
        }
        self.l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `(L L^T)^{-1} b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim() == 0 {
            return DMatrix::zeros(0, b.ncols());
        }
        let y = self.solve_lower(b);
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            return DVector::zeros(0);
        }
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `L L^T`, i.e. the jittered input.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// Upper-triangular `W` with `W W^T = S` (Cholesky in reversed index order).
///
/// `W^{-1}` is then the upper Cholesky factor of `S^{-1}`:
/// `S^{-1} = W^{-T} W^{-1}`, which is how the diagonal blocks of the banded
/// inverse factor are obtained without inverting `S`.
#[derive(Debug, Clone)]
pub struct UpperFactor {
    w: DMatrix<f64>,
    jitter: f64,
}

impl UpperFactor {
    pub fn new(s: &DMatrix<f64>, context: &str) -> Result<Self> {
        let n = s.nrows();
        let reversed = DMatrix::from_fn(n, n, |i, j| s[(n - 1 - i, n - 1 - j)]);
        let chol = cholesky_jittered_with_context(&reversed, context)?;
        let l = chol.l();
        let w = DMatrix::from_fn(n, n, |i, j| l[(n - 1 - i, n - 1 - j)]);
        Ok(UpperFactor {
            w,
            jitter: chol.jitter(),
        })
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `W^{-1} b`: applies the upper Cholesky factor of `S^{-1}`.
    pub fn apply_inverse_factor(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        if self.dim() == 0 {
            return DMatrix::zeros(0, b.ncols());
        }
        self.w
            .solve_upper_triangular(b)
            .expect("factor has a positive diagonal")
    }

    pub fn apply_inverse_factor_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            return DVector::zeros(0);
        }
        self.w
            .solve_upper_triangular(b)
            .expect("factor has a positive diagonal")
    }

    /// Dense `W^{-1}`, upper triangular.
    pub fn inverse_factor(&self) -> DMatrix<f64> {
        self.apply_inverse_factor(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// Dense `S^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let u = self.inverse_factor();
        u.transpose() * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::max_abs;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| next());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn identity_needs_no_jitter() {
        let c = cholesky_jittered(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(c.jitter(), 0.0);
        assert_eq!(c.l(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn rank_one_gets_jitter() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let c = cholesky_jittered(&a).unwrap();
        assert!(c.jitter() > 0.0);
        let err = max_abs(&(c.reconstruct() - &a));
        assert!(err <= 10.0 * c.jitter(), "err {err} jitter {}", c.jitter());
    }

    #[test]
    fn indefinite_exhausts_ladder() {
        // eigenvalues 2, 1, -1 in a rotated basis
        let q = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1).into_inner();
        let q = DMatrix::from_fn(3, 3, |i, j| q[(i, j)]);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, -1.0]));
        let a = &q * d * q.transpose();
        match cholesky_jittered(&a) {
            Err(GpError::NotPositiveDefinite { jitter, .. }) => {
                let mean = 2.0 / 3.0;
                assert!((jitter - JITTER_START * mean * 1e5).abs() < 1e-18);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_tight() {
        for seed in 0..5 {
            let a = spd(12, seed);
            let c = cholesky_jittered(&a).unwrap();
            let mut shifted = a.clone();
            for i in 0..12 {
                shifted[(i, i)] += c.jitter();
            }
            assert!(max_abs(&(c.reconstruct() - shifted)) <= 1e-10 * max_abs(&a));
        }
    }

    #[test]
    fn solves_and_log_det() {
        let a = spd(6, 9);
        let c = cholesky_jittered(&a).unwrap();
        let b = DMatrix::from_fn(6, 2, |i, j| (i + 3 * j) as f64);
        let x = c.solve(&b);
        assert!(max_abs(&(&a * &x - &b)) < 1e-9);
        let det = a.clone().determinant();
        assert!((c.ln_det() - det.ln()).abs() < 1e-10);
    }

    #[test]
    fn upper_factor_inverts() {
        let s = spd(5, 4);
        let f = UpperFactor::new(&s, "test").unwrap();
        let w = f.w();
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(w[(i, j)], 0.0);
            }
        }
        assert!(max_abs(&(w * w.transpose() - &s)) < 1e-12);
        let u = f.inverse_factor();
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(u[(i, j)], 0.0);
            }
            assert!(u[(i, i)] > 0.0);
        }
        let inv = s.clone().try_inverse().unwrap();
        assert!(max_abs(&(f.inverse() - inv)) < 1e-9);
    }

    #[test]
    fn empty_matrices() {
        let c = cholesky_jittered(&DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(c.solve(&DMatrix::zeros(0, 3)).shape(), (0, 3));
        let f = UpperFactor::new(&DMatrix::zeros(0, 0), "empty").unwrap();
        assert_eq!(f.inverse_factor().shape(), (0, 0));
    }
}
