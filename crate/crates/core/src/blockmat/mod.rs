//! Block-structured dense linear algebra used by the predictors.
//!
//! Everything that needs an inverse goes through a Cholesky factor; explicit
//! inverses only appear in tests.

mod banded;
mod cholesky;
mod grid;
mod kl;
mod residual;

pub use banded::{banded_inverse_cholesky, CholeskyFactor};
pub use cholesky::{
    cholesky_jittered, cholesky_jittered_with_context, JitteredCholesky, UpperFactor,
    JITTER_GROWTH, JITTER_MAX_RETRIES, JITTER_START,
};
pub use grid::BlockMatrix;
pub use kl::kl_distance;
pub use residual::{
    block_conditional, q_matrix, r_matrix, residual, BlockConditional, ProjectedSet, Support,
};

use nalgebra::DMatrix;

/// `(a + a^T) / 2`, used after subtractions that should be symmetric.
pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[cfg(test)]
pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
