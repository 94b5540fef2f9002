#![allow(dead_code)]

use lma_gp::lma::{LmaConfig, LmaSetup};
use lma_gp::{Dataset, Hyperparams, Inputs, PointSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth target plus noise on `[-3, 3]^d`, with moderately varied
/// hyperparameters.
pub fn instance(seed: u64, n: usize, n_test: usize, d: usize) -> (Dataset, Inputs, Hyperparams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| {
        (0..d)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect::<Vec<f64>>()
    };
    let xs: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
    let ts: Vec<Vec<f64>> = (0..n_test).map(|_| point(&mut rng)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (v * (1.0 + 0.3 * i as f64)).sin())
                .sum::<f64>()
                + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let ell = rng.random_range(0.8..1.6);
    let h = Hyperparams::isotropic(
        rng.random_range(0.5..1.5),
        rng.random_range(0.005..0.05),
        ell,
        d,
        0.2,
    )
    .unwrap();
    let inputs = if n_test == 0 {
        Inputs::empty(d)
    } else {
        Inputs::from_rows(&ts).unwrap()
    };
    (
        Dataset::new(Inputs::from_rows(&xs).unwrap(), ys).unwrap(),
        inputs,
        h,
    )
}

pub fn setup(
    train: &Dataset,
    test: &Inputs,
    h: &Hyperparams,
    b: usize,
    s: usize,
    m: usize,
    seed: u64,
) -> LmaSetup {
    LmaSetup::new(train, test, h, &LmaConfig::new(b, s, m, seed).unwrap()).unwrap()
}

/// Training block `m` as a point set.
pub fn d_set(train: &Dataset, setup: &LmaSetup, m: usize) -> PointSet {
    PointSet::train(&train.inputs, setup.partition.train_block(m))
}

/// `V_m = D_m ∪ U_m`.
pub fn v_set(train: &Dataset, test: &Inputs, setup: &LmaSetup, m: usize) -> PointSet {
    let d = d_set(train, setup, m);
    let u = PointSet::test(test, setup.partition.test_block(m));
    PointSet::concat([&d, &u], train.dim())
}

/// All training points in block order.
pub fn all_d(train: &Dataset, setup: &LmaSetup) -> PointSet {
    PointSet::train(&train.inputs, &setup.partition.train_order())
}

pub fn block_sizes(setup: &LmaSetup) -> Vec<usize> {
    setup
        .partition
        .train_blocks()
        .iter()
        .map(Vec::len)
        .collect()
}

pub fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut o = vec![0];
    for s in sizes {
        o.push(o.last().unwrap() + s);
    }
    o
}

pub fn block(a: &DMatrix<f64>, off: &[usize], m: usize, n: usize) -> DMatrix<f64> {
    a.view((off[m], off[n]), (off[m + 1] - off[m], off[n + 1] - off[n]))
        .into_owned()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.amax()
}

pub fn inv(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().try_inverse().expect("invertible")
}

/// `max |a - b| / max |b|`, with the denominator floored at `floor`.
pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

/// Dense approximate prior over `D ∪ U` (block order, training first).
pub fn sigma_bar_vv(s: &LmaSetup) -> DMatrix<f64> {
    let (dd, ud, uu) = lma_gp::lma::RbarTable::new(s).unwrap().sigma_bar_dense();
    let (n, u) = (dd.nrows(), uu.nrows());
    let mut full = DMatrix::zeros(n + u, n + u);
    full.view_mut((0, 0), (n, n)).copy_from(&dd);
    full.view_mut((n, 0), (u, n)).copy_from(&ud);
    full.view_mut((0, n), (n, u)).copy_from(&ud.transpose());
    full.view_mut((n, n), (u, u)).copy_from(&uu);
    full
}
