//! Synthetic data: draws from a GP prior and the one-dimensional toy problem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blockmat::cholesky_jittered_with_context;
use crate::data::{Dataset, Inputs};
use crate::error::{GpError, Result};
use crate::kernel::{gram, Hyperparams, PointSet};
use crate::partition::BlockPartition;

/// Up to this many points (training plus test) are drawn jointly; larger draws
/// go chunk by chunk, each chunk conditioned on the one before it.
pub const EXACT_SAMPLING_LIMIT: usize = 4000;
const CHUNK: usize = 2000;

/// Half-width of the input box `[-5, 5]^d`.
pub const DOMAIN_HALF_WIDTH: f64 = 5.0;

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Noisy outputs `y ~ N(mu, Sigma)` at the given inputs. Every point is its own
/// observation, so each one gets independent noise.
pub fn sample_outputs(x: &Inputs, h: &Hyperparams, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    sample_outputs_chunked(x, h, rng, EXACT_SAMPLING_LIMIT, CHUNK)
}

fn sample_outputs_chunked(
    x: &Inputs,
    h: &Hyperparams,
    rng: &mut ChaCha8Rng,
    exact_limit: usize,
    chunk_len: usize,
) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= exact_limit {
        let pts = PointSet::all_train(x);
        let chol = cholesky_jittered_with_context(&gram(&pts, &pts, h)?, "sampling covariance")?;
        let y = chol.l() * standard_normals(rng, n);
        return Ok(y.iter().map(|v| v + h.prior_mean).collect());
    }
    // order along the first coordinate so consecutive chunks are neighbours
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x.row(a)[0].total_cmp(&x.row(b)[0]).then(a.cmp(&b)));
    let mut y = vec![0.0; n];
    let mut prev: Option<(PointSet, DVector<f64>)> = None;
    for chunk in order.chunks(chunk_len) {
        let pts = PointSet::train(x, chunk);
        let k_cc = gram(&pts, &pts, h)?;
        let (mean, cov) = match &prev {
            None => (DVector::zeros(chunk.len()), k_cc),
            Some((p_pts, p_y)) => {
                let k_pp =
                    cholesky_jittered_with_context(&gram(p_pts, p_pts, h)?, "sampling covariance")?;
                let k_pc = gram(p_pts, &pts, h)?;
                let v = k_pp.solve_lower(&k_pc);
                let w = k_pp.solve_lower(&DMatrix::from_column_slice(p_y.len(), 1, p_y.as_slice()));
                (v.tr_mul(&w).column(0).into_owned(), k_cc - v.tr_mul(&v))
            }
        };
        let chol = cholesky_jittered_with_context(&cov, "conditional sampling covariance")?;
        let draw = mean + chol.l() * standard_normals(rng, chunk.len());
        for (pos, &i) in chunk.iter().enumerate() {
            y[i] = draw[pos] + h.prior_mean;
        }
        prev = Some((pts, draw));
    }
    Ok(y)
}

/// Training and test sets drawn from one GP sample path with inputs uniform on
/// `[-5, 5]^d`. Test outputs are noisy, like the training outputs.
pub fn gp_dataset(
    n_train: usize,
    n_test: usize,
    h: &Hyperparams,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_train == 0 {
        return Err(GpError::invalid("synthetic training set must not be empty"));
    }
    let d = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_train + n_test;
    let coords: Vec<f64> = (0..n * d)
        .map(|_| rng.random_range(-DOMAIN_HALF_WIDTH..DOMAIN_HALF_WIDTH))
        .collect();
    let x = Inputs::new(coords, d)?;
    let y = sample_outputs(&x, h, &mut rng)?;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n).collect();
    let all = Dataset::new(x, y)?;
    Ok((all.select(&train_idx), all.select(&test_idx)))
}

/// Block boundaries of the toy problem.
pub const TOY_BOUNDARIES: [f64; 3] = [-2.5, 0.0, 2.5];
pub const TOY_POINTS_PER_BLOCK: usize = 100;

/// The toy's hyperparameters: length-scale 1.2270, noise s.d. 0.0939, signal
/// s.d. 0.6836, prior mean 1.1072.
pub fn toy_hyperparams() -> Hyperparams {
    Hyperparams::isotropic(0.6836f64.powi(2), 0.0939f64.powi(2), 1.2270, 1, 1.1072)
        .expect("toy hyperparameters are valid")
}

pub fn toy_function(x: f64) -> f64 {
    1.0 + x.cos()
}

/// 100 points uniform in each of `[-5,-2.5)`, `[-2.5,0)`, `[0,2.5)`, `[2.5,5)`
/// with `y = 1 + cos(x) + 0.1 eps`.
pub fn toy_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = toy_edges();
    let mut xs = Vec::with_capacity(4 * TOY_POINTS_PER_BLOCK);
    for w in edges.windows(2) {
        for _ in 0..TOY_POINTS_PER_BLOCK {
            xs.push(rng.random_range(w[0]..w[1]));
        }
    }
    let ys = xs
        .iter()
        .map(|&x| toy_function(x) + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::new(Inputs::from_scalars(&xs).expect("finite"), ys).expect("matching lengths")
}

fn toy_edges() -> [f64; 5] {
    [
        -5.0,
        TOY_BOUNDARIES[0],
        TOY_BOUNDARIES[1],
        TOY_BOUNDARIES[2],
        5.0,
    ]
}

/// Block of a scalar input: `x < -2.5` is block 0, `-2.5 <= x < 0` block 1 and so on.
pub fn toy_block_of(x: f64) -> usize {
    TOY_BOUNDARIES.iter().filter(|&&b| x >= b).count()
}

/// Interval partition of one-dimensional training and test inputs.
pub fn toy_partition(train: &Inputs, test: &Inputs) -> Result<BlockPartition> {
    if train.dim() != 1 || (!test.is_empty() && test.dim() != 1) {
        return Err(GpError::invalid("the toy partition is one-dimensional"));
    }
    let blocks = TOY_BOUNDARIES.len() + 1;
    let mut tr = vec![Vec::new(); blocks];
    for (i, x) in train.rows().enumerate() {
        tr[toy_block_of(x[0])].push(i);
    }
    let mut te = vec![Vec::new(); blocks];
    for (j, x) in test.rows().enumerate() {
        te[toy_block_of(x[0])].push(j);
    }
    BlockPartition::from_blocks(train, tr, test.len(), te)
}
