mod common;

use common::*;
use lma_gp::lma::{lma_predict_summary, LmaConfig};
use lma_gp::{fgp_predict, partition_inputs, pic_predict_direct, select_support};

/// `(n, d, M)` for ten random instances.
const GRID: [(usize, usize, usize); 10] = [
    (40, 1, 2),
    (60, 1, 3),
    (80, 1, 4),
    (50, 2, 2),
    (90, 2, 3),
    (120, 2, 4),
    (70, 3, 2),
    (100, 3, 3),
    (120, 3, 4),
    (36, 2, 4),
];

#[test]
fn full_band_reproduces_fgp() {
    for (i, &(n, d, m)) in GRID.iter().enumerate() {
        let (train, test, h) = instance(100 + i as u64, n, 20, d);
        let cfg = LmaConfig::new(m - 1, 8, m, i as u64).unwrap();
        let p = lma_predict_summary(&train, &test, &h, &cfg, false).unwrap();
        let f = fgp_predict(&train, &test, &h, false).unwrap();
        assert!(rel_diff(&p.mean, &f.mean, 1e-12) <= 1e-6, "instance {i}");
        assert!(
            rel_diff(&p.variance(), &f.variance(), 1e-12) <= 1e-6,
            "instance {i}"
        );
    }
}

#[test]
fn zero_band_reproduces_pic() {
    for (i, &(n, d, m)) in GRID.iter().enumerate() {
        let (train, test, h) = instance(200 + i as u64, n, 20, d);
        let cfg = LmaConfig::new(0, 8, m, i as u64).unwrap();
        let p = lma_predict_summary(&train, &test, &h, &cfg, true).unwrap();
        let part = partition_inputs(&train.inputs, &test, m).unwrap();
        let sup = select_support(&train.inputs, 8, i as u64).unwrap();
        let q = pic_predict_direct(&train, &test, &h, &sup, &part, true).unwrap();
        assert!(rel_diff(&p.mean, &q.mean, 1e-12) <= 1e-8, "instance {i}");
        let (pc, qc) = (p.full_cov().unwrap(), q.full_cov().unwrap());
        assert!((pc - qc).amax() <= 1e-8 * qc.amax(), "instance {i}");
    }
}
