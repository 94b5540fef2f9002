//! Who sends which residual block to whom.
//!
//! Worker `m` holds `D_m` and its band `D^B_m = D_{m+1}, ..., D_{m+B}`, so it
//! needs the rows `Rbar_{D_k U}` for `k` in `m ..= m + B`. Every block off the
//! band is computed once, by the worker owning its row (or, on the transpose
//! path, the worker owning its test block), and sent to exactly the workers
//! whose band contains that row.

use std::ops::Range;

use crate::lma::cross::dd_block_needed;

/// Band of block `m`: `m+1 .. min(m+B, M-1)` (inclusive).
pub fn band(m: usize, bandwidth: usize, m_blocks: usize) -> Range<usize> {
    (m + 1).min(m_blocks)..(m + bandwidth + 1).min(m_blocks)
}

/// Workers whose band contains block `k`.
pub fn band_holders(k: usize, bandwidth: usize) -> Range<usize> {
    k.saturating_sub(bandwidth)..k
}

/// Recipients of `Rbar_{D_k U_n}` computed on the upper recursion by worker `k`.
pub fn upper_recipients(k: usize, bandwidth: usize) -> Range<usize> {
    band_holders(k, bandwidth)
}

/// Recipients of `Rbar_{D_j D_k}` computed by worker `j`: band holders of `j`
/// that reach past their band to `k`.
pub fn dd_recipients(j: usize, k: usize, bandwidth: usize) -> Vec<usize> {
    band_holders(j, bandwidth)
        .filter(|&w| k > w + bandwidth)
        .collect()
}

/// Recipients of `Rbar_{D_k U_n}` produced on the transpose path by worker `n`.
pub fn lower_recipients(k: usize, bandwidth: usize) -> Range<usize> {
    k.saturating_sub(bandwidth)..k + 1
}

/// Number of upper recursive steps, `M - 1 - B`.
pub fn upper_steps(m_blocks: usize, bandwidth: usize) -> usize {
    m_blocks.saturating_sub(bandwidth + 1)
}

/// Offsets `k - j` of the off-band training blocks needed on the transpose path.
pub fn dd_offsets(m_blocks: usize, bandwidth: usize) -> Range<usize> {
    bandwidth + 1..m_blocks.saturating_sub(1).max(bandwidth + 1)
}

/// Message count of one full run, derived from the routing rules: residual
/// blocks on the upper, training-training and lower paths, then one local
/// summary, one global-summary slice and one prediction per worker.
pub fn expected_message_count(m_blocks: usize, bandwidth: usize) -> usize {
    let b = bandwidth;
    let mut upper = 0;
    let mut lower = 0;
    let mut dd = 0;
    for k in 0..m_blocks {
        for n in 0..m_blocks {
            if n > k + b {
                upper += upper_recipients(k, b).len();
            }
            if k > n + b {
                lower += lower_recipients(k, b).len();
            }
            if n > k && dd_block_needed(k, n, b) {
                dd += dd_recipients(k, n, b).len();
            }
        }
    }
    upper + dd + lower + 3 * m_blocks
}
