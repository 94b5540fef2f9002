mod common;

use common::*;
use lma_gp::blockmat::{cholesky_jittered, kl_distance};
use lma_gp::kernel::{gram, kernel_eval, self_gram};
use lma_gp::lma::{lma_predict_direct, lma_predict_summary, LmaConfig, RbarTable};
use lma_gp::parallel::{run_parallel_lma, ParallelOptions};
use lma_gp::{partition_inputs, select_support, Hyperparams, Inputs};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coords(d: usize, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, d * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_is_symmetric(a in coords(3, 1), b in coords(3, 1), ell in 0.2f64..3.0, sv in 0.1f64..3.0) {
        let h = Hyperparams::isotropic(sv, 0.1, ell, 3, 0.0).unwrap();
        prop_assert_eq!(kernel_eval(&a, &b, false, &h).unwrap(), kernel_eval(&b, &a, false, &h).unwrap());
    }

    #[test]
    fn doubling_lengthscales_equals_halving_inputs(a in coords(2, 1), b in coords(2, 1), l1 in 0.2f64..3.0, l2 in 0.2f64..3.0) {
        let h = Hyperparams::new(1.3, 0.0, vec![l1, l2], 0.0).unwrap();
        let h2 = Hyperparams::new(1.3, 0.0, vec![2.0 * l1, 2.0 * l2], 0.0).unwrap();
        let half = |x: &[f64]| x.iter().map(|v| v / 2.0).collect::<Vec<_>>();
        let k2 = kernel_eval(&a, &b, false, &h2).unwrap();
        let k = kernel_eval(&half(&a), &half(&b), false, &h).unwrap();
        prop_assert!((k - k2).abs() <= 1e-15);
    }

    #[test]
    fn self_gram_is_positive_definite(x in coords(2, 12), noise in 0.001f64..0.5) {
        let h = Hyperparams::isotropic(1.0, noise, 1.0, 2, 0.0).unwrap();
        let k = self_gram(&Inputs::new(x, 2).unwrap(), &h).unwrap();
        prop_assert!(k.symmetric_eigenvalues().min() > 0.0);
        prop_assert_eq!(&k, &k.transpose());
    }

    #[test]
    fn cholesky_round_trip(x in coords(2, 10), noise in 0.0f64..0.1) {
        let h = Hyperparams::isotropic(1.0, noise, 1.0, 2, 0.0).unwrap();
        let a = self_gram(&Inputs::new(x, 2).unwrap(), &h).unwrap();
        let c = cholesky_jittered(&a).unwrap();
        let target = &a + DMatrix::identity(10, 10) * c.jitter();
        prop_assert!((c.reconstruct() - target).amax() <= 1e-10 * a.amax());
    }

    #[test]
    fn kl_is_zero_only_at_equality(x in coords(1, 6), shift in 0.01f64..1.0) {
        let h = Hyperparams::isotropic(1.0, 0.1, 1.0, 1, 0.0).unwrap();
        let a = self_gram(&Inputs::new(x, 1).unwrap(), &h).unwrap();
        prop_assert!(kl_distance(&a, &a).unwrap().abs() <= 1e-12);
        let b = &a + DMatrix::identity(6, 6) * shift;
        prop_assert!(kl_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn partition_is_even_disjoint_and_deterministic(x in coords(2, 40), t in coords(2, 7), m in 1usize..8) {
        let train = Inputs::new(x, 2).unwrap();
        let test = Inputs::new(t, 2).unwrap();
        let p = partition_inputs(&train, &test, m).unwrap();
        let sizes: Vec<usize> = p.train_blocks().iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = p.train_blocks().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..40).collect::<Vec<_>>());
        let mut all_u: Vec<usize> = p.test_blocks().concat();
        all_u.sort_unstable();
        prop_assert_eq!(all_u, (0..7).collect::<Vec<_>>());
        prop_assert_eq!(p, partition_inputs(&train, &test, m).unwrap());
    }

    #[test]
    fn support_is_distinct_and_in_range(n in 1usize..60, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let train = Inputs::from_scalars(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let size = 1 + ((n - 1) as f64 * frac) as usize;
        let s = select_support(&train, size, seed).unwrap();
        prop_assert_eq!(s.len(), size);
        let mut sorted = s.indices.clone();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), size);
        prop_assert!(s.indices.iter().all(|&i| i < n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rbar_inverse_is_banded(seed in 0u64..10_000, m in 2usize..6, b_frac in 0.0f64..1.0, d in 1usize..4) {
        let b = ((m - 1) as f64 * b_frac) as usize;
        let (train, test, h) = instance(seed, 10 * m, 0, d);
        let s = setup(&train, &test, &h, b, 5, m, seed);
        let rbar = RbarTable::new(&s).unwrap().rbar_dd_dense();
        let r_inv = inv(&rbar);
        let off = offsets(&block_sizes(&s));
        for i in 0..m {
            for j in 0..m {
                if i.abs_diff(j) > b {
                    prop_assert!(max_abs(&block(&r_inv, &off, i, j)) <= 1e-8 * r_inv.amax());
                }
            }
        }
        prop_assert!((&rbar - rbar.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn summary_equals_direct(seed in 0u64..10_000, m in 2usize..6, b_frac in 0.0f64..1.0, s_len in 1usize..10) {
        let b = 1 + ((m - 2) as f64 * b_frac) as usize;
        let (train, test, h) = instance(seed, 10 * m, 9, 2);
        let cfg = LmaConfig::new(b, s_len, m, seed).unwrap();
        let dir = lma_predict_direct(&train, &test, &h, &cfg, true).unwrap();
        let sum = lma_predict_summary(&train, &test, &h, &cfg, true).unwrap();
        let scale = 1.0 + dir.mean.amax().max(dir.full_cov().unwrap().amax());
        prop_assert!((&dir.mean - &sum.mean).amax() <= 1e-6 * scale);
        prop_assert!((dir.full_cov().unwrap() - sum.full_cov().unwrap()).amax() <= 1e-6 * scale);
        let c = sum.full_cov().unwrap();
        prop_assert!((c - c.transpose()).amax() <= 1e-10);
        // the variance floor holds whenever the joint approximate prior is a covariance
        let s = setup(&train, &test, &h, b, s_len, m, seed);
        if sigma_bar_vv(&s).symmetric_eigenvalues().min() >= -1e-12 {
            prop_assert!(c.diagonal().iter().all(|v| *v >= -1e-8));
        }
    }

    #[test]
    fn prediction_order_follows_test_order(seed in 0u64..10_000) {
        let (train, test, h) = instance(seed, 40, 8, 2);
        let cfg = LmaConfig::new(1, 5, 4, seed).unwrap();
        let p = lma_predict_summary(&train, &test, &h, &cfg, false).unwrap();
        let rev: Vec<usize> = (0..8).rev().collect();
        let q = lma_predict_summary(&train, &test.select(&rev), &h, &cfg, false).unwrap();
        for j in 0..8 {
            prop_assert!((p.mean[j] - q.mean[7 - j]).abs() <= 1e-10);
        }
    }

    #[test]
    fn parallel_equals_centralized(seed in 0u64..10_000, m in 2usize..7, b_frac in 0.0f64..1.0, threads in 1usize..5) {
        let b = 1 + ((m - 2) as f64 * b_frac) as usize;
        let (train, test, h) = instance(seed, 8 * m, 10, 2);
        let cfg = LmaConfig::new(b, 6, m, seed).unwrap();
        let c = lma_predict_summary(&train, &test, &h, &cfg, false).unwrap();
        let (p, stats) = run_parallel_lma(&train, &test, &h, &cfg, &ParallelOptions::with_threads(threads)).unwrap();
        prop_assert!((&c.mean - &p.mean).amax() <= 1e-8);
        prop_assert!((c.variance() - p.variance()).amax() <= 1e-8);
        prop_assert_eq!(stats.messages, lma_gp::parallel::expected_message_count(m, b));
    }

    #[test]
    fn gram_blocks_are_consistent(x in coords(2, 9)) {
        let h = Hyperparams::isotropic(0.7, 0.05, 1.1, 2, 0.0).unwrap();
        let pts = lma_gp::PointSet::all_train(&Inputs::new(x, 2).unwrap());
        let ab = gram(&pts, &pts, &h).unwrap();
        prop_assert_eq!(&ab, &self_gram(pts.coords(), &h).unwrap());
    }
}
