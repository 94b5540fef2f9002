mod common;

use common::*;
use lma_gp::blockmat::{banded_inverse_cholesky, kl_distance, r_matrix, Support};
use lma_gp::kernel::gram;
use lma_gp::lma::RbarTable;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn off_band_inverse_blocks_vanish() {
    for b in [1usize, 2] {
        let (train, test, h) = instance(10 + b as u64, 80, 0, 2);
        let s = setup(&train, &test, &h, b, 8, 4, 1);
        let rbar = RbarTable::new(&s).unwrap().rbar_dd_dense();
        let r_inv = inv(&rbar);
        let off = offsets(&block_sizes(&s));
        let scale = max_abs(&r_inv);
        for m in 0..4usize {
            for n in 0..4 {
                if m.abs_diff(n) > b {
                    let x = max_abs(&block(&r_inv, &off, m, n));
                    assert!(x <= 1e-8 * scale, "B={b} ({m},{n}): {x} vs {scale}");
                }
            }
        }
    }
}

#[test]
fn band_blocks_are_the_exact_residual() {
    let (train, test, h) = instance(3, 60, 12, 2);
    let s = setup(&train, &test, &h, 1, 6, 4, 2);
    let mut table = RbarTable::new(&s).unwrap();
    for m in 0..4 {
        for n in 0..4 {
            let got = table.block(m, n);
            let (vm, vn) = (v_set(&train, &test, &s, m), v_set(&train, &test, &s, n));
            if m.abs_diff(n) <= 1 {
                let r = r_matrix(&vm, &vn, &s.support, &h).unwrap();
                assert!((&got - &r).amax() <= 1e-14, "({m},{n})");
                let g = gram(&vm, &vn, &h).unwrap();
                assert!((table.sigma_bar_block(m, n) - g).amax() <= 1e-12);
            }
            assert_eq!(got, table.block(n, m).transpose());
        }
    }
}

#[test]
fn zero_bandwidth_keeps_only_reduced_rank_off_diagonal() {
    let (train, test, h) = instance(4, 40, 8, 1);
    let s = setup(&train, &test, &h, 0, 5, 3, 2);
    let mut table = RbarTable::new(&s).unwrap();
    for (m, n) in [(0, 1), (0, 2), (2, 1)] {
        assert!(table.block(m, n).iter().all(|v| *v == 0.0));
        let (vm, vn) = (v_set(&train, &test, &s, m), v_set(&train, &test, &s, n));
        let q = lma_gp::blockmat::q_matrix(&vm, &vn, &s.support, &h).unwrap();
        assert!((table.sigma_bar_block(m, n) - q).amax() <= 1e-12);
    }
}

#[test]
fn full_bandwidth_prior_is_exact() {
    let (train, test, h) = instance(5, 45, 9, 2);
    let s = setup(&train, &test, &h, 2, 5, 3, 2);
    let (dd, ud, uu) = RbarTable::new(&s).unwrap().sigma_bar_dense();
    let d = all_d(&train, &s);
    let u = lma_gp::PointSet::test(&test, &s.partition.test_order());
    assert!((dd - gram(&d, &d, &h).unwrap()).amax() <= 1e-12);
    assert!((ud - gram(&u, &d, &h).unwrap()).amax() <= 1e-12);
    assert!((uu - gram(&u, &u, &h).unwrap()).amax() <= 1e-12);
}

#[test]
fn far_block_is_the_chained_product() {
    // M = 4, B = 1: Rbar_{V1 V4} = R_{V1 D2} R_{D2 D2}^{-1} R_{D2 D3} R_{D3 D3}^{-1} R_{D3 V4}
    let (train, test, h) = instance(6, 60, 16, 1);
    let s = setup(&train, &test, &h, 1, 6, 4, 3);
    let r = |a: &lma_gp::PointSet, b: &lma_gp::PointSet| r_matrix(a, b, &s.support, &h).unwrap();
    let (v1, v4) = (v_set(&train, &test, &s, 0), v_set(&train, &test, &s, 3));
    let (d2, d3) = (d_set(&train, &s, 1), d_set(&train, &s, 2));
    let expected = r(&v1, &d2) * inv(&r(&d2, &d2)) * r(&d2, &d3) * inv(&r(&d3, &d3)) * r(&d3, &v4);
    let got = RbarTable::new(&s).unwrap().block(0, 3);
    let scale = max_abs(&expected).max(1e-3);
    assert!(
        (&got - &expected).amax() <= 1e-12 * scale.max(1.0),
        "{}",
        (&got - &expected).amax()
    );
}

/// Random factor with the banded-inverse sparsity: upper triangular diagonal
/// blocks and `bandwidth` blocks to their right.
fn random_banded_factor(sizes: &[usize], bandwidth: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let off = offsets(sizes);
    let n = *off.last().unwrap();
    let mut u = DMatrix::zeros(n, n);
    for m in 0..sizes.len() {
        for i in off[m]..off[m + 1] {
            u[(i, i)] = rng.random_range(0.5..3.0);
            for j in (i + 1)..off[m + 1] {
                u[(i, j)] = rng.random_range(-0.5..0.5);
            }
        }
        for k in (m + 1)..sizes.len().min(m + bandwidth + 1) {
            for i in off[m]..off[m + 1] {
                for j in off[k]..off[k + 1] {
                    u[(i, j)] = rng.random_range(-0.5..0.5);
                }
            }
        }
    }
    u
}

fn banded_mask(sizes: &[usize], bandwidth: usize) -> DMatrix<f64> {
    let off = offsets(sizes);
    let n = *off.last().unwrap();
    DMatrix::from_fn(n, n, |i, j| {
        let bi = off.partition_point(|&o| o <= i) - 1;
        let bj = off.partition_point(|&o| o <= j) - 1;
        let allowed = (bi == bj && j >= i) || (bj > bi && bj - bi <= bandwidth);
        if allowed {
            1.0
        } else {
            0.0
        }
    })
}

#[test]
fn kl_optimal_among_banded_inverse_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for b in [1usize, 2] {
        let (train, test, h) = instance(20 + b as u64, 48, 0, 2);
        let s = setup(&train, &test, &h, b, 6, 4, 5);
        let d = all_d(&train, &s);
        let r_dd = r_matrix(&d, &d, &s.support, &h).unwrap();
        let rbar = RbarTable::new(&s).unwrap().rbar_dd_dense();
        let best = kl_distance(&r_dd, &rbar).unwrap();
        assert!(best >= 0.0);
        let sizes = block_sizes(&s);
        let mask = banded_mask(&sizes, b);
        let u_opt = banded_inverse_cholesky(&train.inputs, &s.partition, &s.support, &h, b)
            .unwrap()
            .to_dense();
        for trial in 0..50 {
            // half arbitrary factors, half perturbations of the optimum
            let u = if trial % 2 == 0 {
                random_banded_factor(&sizes, b, &mut rng)
            } else {
                let eps = 10f64.powi(-(trial % 7) - 1);
                let noise = random_banded_factor(&sizes, b, &mut rng).component_mul(&mask);
                &u_opt + noise * eps * u_opt.amax()
            };
            let rhat = inv(&(u.transpose() * &u));
            let rhat = (&rhat + rhat.transpose()) * 0.5;
            let k = kl_distance(&r_dd, &rhat).unwrap();
            assert!(k >= best - 1e-9, "B={b} trial {trial}: {k} < {best}");
        }
    }
}

#[test]
fn trace_identity() {
    for (b, m) in [(1usize, 4usize), (2, 4), (1, 3)] {
        let (train, test, h) = instance(30 + b as u64 + m as u64, 60, 0, 2);
        let s = setup(&train, &test, &h, b, 6, m, 1);
        let d = all_d(&train, &s);
        let r_dd = r_matrix(&d, &d, &s.support, &h).unwrap();
        let rbar = RbarTable::new(&s).unwrap().rbar_dd_dense();
        let chol = rbar.cholesky().unwrap();
        let t = chol.solve(&r_dd).trace();
        assert!((t - 60.0).abs() <= 1e-6 * 60.0, "B={b} M={m}: {t}");
    }
}

#[test]
fn factor_has_banded_sparsity_and_inverts_rbar() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (b, m) in [(1usize, 4usize), (2, 4), (1, 2), (0, 3)] {
        let (train, test, h) = instance(40 + b as u64 + m as u64, 60, 0, 2);
        let s = setup(&train, &test, &h, b, 6, m, 4);
        let f = banded_inverse_cholesky(&train.inputs, &s.partition, &s.support, &h, b).unwrap();
        let u = f.to_dense();
        let mask = banded_mask(&block_sizes(&s), b);
        for (v, keep) in u.iter().zip(mask.iter()) {
            if *keep == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
        let rbar = RbarTable::new(&s).unwrap().rbar_dd_dense();
        let chol = rbar.cholesky().unwrap();
        for _ in 0..20 {
            let v = DVector::from_fn(60, |_, _| rng.random_range(-1.0..1.0));
            let want = chol.solve(&v);
            let got = f.apply_gram(&v);
            assert!((&got - &want).norm() <= 1e-8 * want.norm(), "B={b} M={m}");
        }
    }
}

#[test]
fn full_band_factor_inverts_exact_residual() {
    let (train, test, h) = instance(50, 40, 0, 1);
    let s = setup(&train, &test, &h, 1, 5, 2, 4);
    let f = banded_inverse_cholesky(&train.inputs, &s.partition, &s.support, &h, 1).unwrap();
    let d = all_d(&train, &s);
    let r_inv = inv(&r_matrix(&d, &d, &s.support, &h).unwrap());
    let u = f.to_dense();
    let diff = (u.transpose() * &u - &r_inv).amax();
    assert!(diff <= 1e-8 * r_inv.amax(), "{diff}");
}

#[test]
fn last_block_has_no_band() {
    let (train, test, h) = instance(51, 40, 0, 1);
    let s = setup(&train, &test, &h, 1, 5, 4, 4);
    let f = banded_inverse_cholesky(&train.inputs, &s.partition, &s.support, &h, 1).unwrap();
    assert_eq!(f.band_block(3).ncols(), 0);
    let d4 = d_set(&train, &s, 3);
    let r_inv = inv(&r_matrix(&d4, &d4, &s.support, &h).unwrap());
    let u = f.diag_block(3);
    assert!((u.transpose() * u - &r_inv).amax() <= 1e-8 * r_inv.amax());
}

#[test]
fn factor_product_is_banded() {
    let (train, test, h) = instance(52, 60, 0, 2);
    let s = setup(&train, &test, &h, 1, 6, 4, 4);
    let u = banded_inverse_cholesky(&train.inputs, &s.partition, &s.support, &h, 1)
        .unwrap()
        .to_dense();
    let p = u.transpose() * &u;
    let off = offsets(&block_sizes(&s));
    for m in 0..4usize {
        for n in 0..4 {
            if m.abs_diff(n) > 1 {
                assert!(max_abs(&block(&p, &off, m, n)) <= 1e-9);
            }
        }
    }
}

#[test]
fn support_only_sees_its_own_noise() {
    // the support set is a subset of D, yet R_DD stays positive definite
    let (train, test, h) = instance(53, 30, 0, 1);
    let s = setup(&train, &test, &h, 1, 30, 3, 1);
    let d = all_d(&train, &s);
    let r = r_matrix(&d, &d, &s.support, &h).unwrap();
    assert!(r.cholesky().is_some());
    let sup = Support::from_training(
        &train.inputs,
        &lma_gp::select_support(&train.inputs, 30, 1).unwrap(),
        &h,
    )
    .unwrap();
    assert_eq!(sup.len(), 30);
}
